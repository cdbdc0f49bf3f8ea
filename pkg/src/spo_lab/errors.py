class SpoLabError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(SpoLabError, ValueError):
    pass


class ConfigError(SpoLabError, ValueError):
    pass


class PoisonedGradientError(SpoLabError, FloatingPointError):
    def __init__(self, layer: int, what: str = "weight"):
        self.layer = layer
        super().__init__(f"non-finite {what} gradient in layer {layer}")


class RatioOverflowError(SpoLabError, OverflowError):
    def __init__(self, new_log_prob: float, old_log_prob: float):
        self.new_log_prob = new_log_prob
        self.old_log_prob = old_log_prob
        super().__init__(
            f"probability ratio overflows: log_prob new={new_log_prob!r}, old={old_log_prob!r}"
        )


class InvalidDistributionError(SpoLabError, ValueError):
    pass


class EmptyBatchError(SpoLabError, ValueError):
    pass


class SequencingError(SpoLabError, RuntimeError):
    pass


class ActionSpaceError(SpoLabError, ValueError):
    pass


class NonFiniteLossError(SpoLabError, FloatingPointError):
    def __init__(self, minibatch: int, epoch: int, loss: float):
        self.minibatch = minibatch
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, mini-batch {minibatch}")


class EnvFault(SpoLabError, RuntimeError):
    pass
