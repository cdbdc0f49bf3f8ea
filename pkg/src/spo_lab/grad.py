"""Dense tanh MLPs with hand-written reverse-mode gradients and Adam.

Weights are stored out x in, so layer k computes ``W[k] @ h + b[k]``.
Inputs may be a single vector ``(in,)`` or a batch ``(B, in)``; gradients
from a batch are summed over the batch axis.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, PoisonedGradientError, ShapeError


@dataclass
class MlpParams:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ShapeError(f"bad layer sizes {self.layer_sizes}")
        n = len(self.layer_sizes) - 1
        if len(self.weights) != n or len(self.biases) != n:
            raise ShapeError("need one weight matrix and one bias per layer")
        for k in range(n):
            want = (self.layer_sizes[k + 1], self.layer_sizes[k])
            if self.weights[k].shape != want:
                raise ShapeError(f"layer {k}: weight shape {self.weights[k].shape}, expected {want}")
            if self.biases[k].shape != (want[0],):
                raise ShapeError(f"layer {k}: bias shape {self.biases[k].shape}, expected {(want[0],)}")

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def arrays(self) -> list[np.ndarray]:
        """Parameters in the fixed order W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


@dataclass
class GradBuffer:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "GradBuffer":
        return cls(
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
        )

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_arrays(cls, arrays, **kw) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], **kw)

    @classmethod
    def for_params(cls, params: MlpParams, **kw) -> "AdamState":
        return cls.for_arrays(params.arrays(), **kw)


def orthogonal(shape, gain: float, rng: np.random.Generator) -> np.ndarray:
    rows, cols = shape
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_mlp(
    layer_sizes,
    rng: np.random.Generator,
    hidden_gain: float = np.sqrt(2.0),
    output_gain: float = 1.0,
) -> MlpParams:
    sizes = [int(s) for s in layer_sizes]
    weights, biases = [], []
    for k in range(len(sizes) - 1):
        gain = output_gain if k == len(sizes) - 2 else hidden_gain
        weights.append(orthogonal((sizes[k + 1], sizes[k]), gain, rng))
        biases.append(np.zeros(sizes[k + 1]))
    return MlpParams(sizes, weights, biases)


def _check_input(params: MlpParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != params.layer_sizes[0]:
        raise ShapeError(f"input shape {x.shape} does not match input size {params.layer_sizes[0]}")
    return x


def _forward_trace(params: MlpParams, x: np.ndarray) -> list[np.ndarray]:
    # activations[k] is the input to layer k; the last entry is the output
    acts = [x]
    h = x
    last = params.num_layers - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w.T + b
        if k < last:
            h = np.tanh(h)
        acts.append(h)
    return acts


def forward(params: MlpParams, x) -> np.ndarray:
    x = _check_input(params, x)
    return _forward_trace(params, x)[-1]


def backward(params: MlpParams, x, output_grad) -> GradBuffer:
    """Gradient of ``sum(output * output_grad)`` with respect to every parameter."""
    x = _check_input(params, x)
    g = np.asarray(output_grad, dtype=np.float64)
    out_shape = x.shape[:-1] + (params.layer_sizes[-1],)
    if g.shape != out_shape:
        raise ShapeError(f"output_grad shape {g.shape}, expected {out_shape}")
    batched = x.ndim == 2
    acts = _forward_trace(params, x)
    grads = GradBuffer.zeros_like(params)
    for k in range(params.num_layers - 1, -1, -1):
        h_in = acts[k]
        if batched:
            grads.weights[k] = g.T @ h_in
            grads.biases[k] = g.sum(axis=0)
        else:
            grads.weights[k] = np.outer(g, h_in)
            grads.biases[k] = g.copy()
        if k > 0:
            # h_in = tanh(pre) so d tanh = 1 - h_in^2
            g = (g @ params.weights[k]) * (1.0 - h_in * h_in)
    return grads


def input_grad(params: MlpParams, x, output_grad) -> np.ndarray:
    x = _check_input(params, x)
    g = np.asarray(output_grad, dtype=np.float64)
    acts = _forward_trace(params, x)
    for k in range(params.num_layers - 1, -1, -1):
        g = g @ params.weights[k]
        if k > 0:
            g = g * (1.0 - acts[k] ** 2)
    return g


def adam_update(arrays, grads, state: AdamState, lr: float, names=None) -> None:
    """Bias-corrected Adam, applied in place to ``arrays``."""
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if len(arrays) != len(grads) or len(arrays) != len(state.m):
        raise ShapeError("parameter, gradient and moment lists differ in length")
    for i, (p, g) in enumerate(zip(arrays, grads)):
        if p.shape != g.shape:
            raise ShapeError(f"gradient {i} has shape {g.shape}, parameter has {p.shape}")
        if not np.all(np.isfinite(g)):
            layer, what = names[i] if names else (i, "parameter")
            raise PoisonedGradientError(layer, what)
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(arrays, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def adam_step(params: MlpParams, grads: GradBuffer, state: AdamState, lr: float):
    names = []
    for k in range(params.num_layers):
        names += [(k, "weight"), (k, "bias")]
    adam_update(params.arrays(), grads.arrays(), state, lr, names=names)
    return params, state


# --------------------------------------------------------------------------
# JSON checkpoints. Python's float repr round-trips exactly.
# --------------------------------------------------------------------------

def params_to_dict(params: MlpParams) -> dict:
    return {
        "layer_sizes": list(params.layer_sizes),
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }


def params_from_dict(d: dict) -> MlpParams:
    return MlpParams(
        list(d["layer_sizes"]),
        [np.array(w, dtype=np.float64).reshape(len(w), -1) for w in d["weights"]],
        [np.array(b, dtype=np.float64) for b in d["biases"]],
    )


def adam_to_dict(state: AdamState) -> dict:
    return {
        "m": [a.tolist() for a in state.m],
        "v": [a.tolist() for a in state.v],
        "step": state.step,
        "beta1": state.beta1,
        "beta2": state.beta2,
        "eps": state.eps,
    }


def adam_from_dict(d: dict, like: list[np.ndarray]) -> AdamState:
    m = [np.array(a, dtype=np.float64).reshape(ref.shape) for a, ref in zip(d["m"], like)]
    v = [np.array(a, dtype=np.float64).reshape(ref.shape) for a, ref in zip(d["v"], like)]
    return AdamState(m, v, int(d["step"]), float(d["beta1"]), float(d["beta2"]), float(d["eps"]))


def checkpoint_dict(params: MlpParams, state: AdamState | None = None) -> dict:
    d = params_to_dict(params)
    d["adam_state"] = adam_to_dict(state) if state is not None else None
    d["step"] = state.step if state is not None else 0
    return d


def save_checkpoint(path, params: MlpParams, state: AdamState | None = None) -> None:
    Path(path).write_text(json.dumps(checkpoint_dict(params, state)))


def load_checkpoint(path) -> tuple[MlpParams, AdamState | None]:
    d = json.loads(Path(path).read_text())
    params = params_from_dict(d)
    state = None
    if d.get("adam_state") is not None:
        state = adam_from_dict(d["adam_state"], params.arrays())
    return params, state
