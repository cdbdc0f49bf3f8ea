"""Training configuration: defaults, flat TOML files and ``key=value`` overrides."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .envs import ENV_IDS, make_env
from .errors import ConfigError
from .objectives import ObjectiveKind

# Per-action-space defaults (discrete, continuous)
SPACE_DEFAULTS = {
    "horizon": (128, 256),
    "learning_rate": (2.5e-4, 3e-4),
    "update_epochs": (4, 10),
    "c2": (0.01, 0.0),
}


@dataclass
class TrainConfig:
    env_id: str | None = None
    objective: ObjectiveKind = ObjectiveKind.SPO
    eps: float = 0.2
    num_workers: int = 8
    horizon: int | None = None
    total_steps: int = 1_000_000
    learning_rate: float | None = None
    lr_decay: bool = True
    update_epochs: int | None = None
    num_minibatches: int = 4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    c1: float = 0.5
    c2: float | None = None
    advantage_norm: bool = True
    seed: int = 0
    hidden_sizes: list[int] = field(default_factory=lambda: [64, 64])
    checkpoint_every: int = 10
    # code-level extras, all off by default
    max_grad_norm: float = 0.0
    target_kl: float = 0.0
    adaptive_lr: bool = False

    @property
    def batch_size(self) -> int:
        return self.num_workers * self.horizon

    @property
    def minibatch_size(self) -> int:
        return self.batch_size // self.num_minibatches

    @property
    def num_phases(self) -> int:
        return self.total_steps // self.batch_size

    def resolved(self) -> "TrainConfig":
        """Copy with per-action-space defaults filled in, validated."""
        if not self.env_id:
            raise ConfigError("env_id is required (one of: " + ", ".join(ENV_IDS) + ")")
        if self.env_id not in ENV_IDS:
            raise ConfigError(f"env_id {self.env_id!r} unknown; expected one of {ENV_IDS}")
        cfg = dataclasses.replace(self, hidden_sizes=list(self.hidden_sizes))
        cfg.objective = ObjectiveKind.parse(cfg.objective)
        col = 0 if make_env(cfg.env_id).spec.discrete else 1
        for name, pair in SPACE_DEFAULTS.items():
            if getattr(cfg, name) is None:
                setattr(cfg, name, pair[col])
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        for name in ("num_workers", "horizon", "num_minibatches", "update_epochs", "checkpoint_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.batch_size % self.num_minibatches:
            raise ConfigError(
                f"batch size {self.batch_size} (num_workers*horizon) not divisible by num_minibatches {self.num_minibatches}"
            )
        if self.total_steps < 0:
            raise ConfigError("total_steps must be nonnegative")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not (0 <= self.gamma <= 1 and 0 <= self.gae_lambda <= 1):
            raise ConfigError("gamma and gae_lambda must lie in [0, 1]")
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ConfigError("hidden_sizes must be a nonempty list of positive ints")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["objective"] = ObjectiveKind.parse(self.objective).value
        return {k: v for k, v in d.items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        kw = {k: _coerce(k, v) for k, v in d.items()}
        return cls(**kw)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _coerce(name: str, value):
    kind = _FIELD_TYPES[name]
    try:
        if name == "objective":
            return ObjectiveKind.parse(value)
        if name == "hidden_sizes":
            if isinstance(value, str):
                value = [v for v in value.replace("[", "").replace("]", "").split(",") if v.strip()]
            return [int(v) for v in value]
        if kind.startswith("bool"):
            if isinstance(value, str):
                low = value.strip().lower()
                if low not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
                    raise ValueError(value)
                return low in ("true", "1", "yes", "on")
            return bool(value)
        if kind.startswith("int"):
            if isinstance(value, str):
                value = float(value.replace("_", "")) if any(c in value for c in ".eE") else int(value.replace("_", ""))
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind.startswith("float"):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value {value!r} for field {name}") from None


def parse_overrides(pairs) -> dict:
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config field {key!r} in override")
        out[key] = value.strip()
    return out


def load_config(path=None, overrides=None) -> TrainConfig:
    data = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    data.update(parse_overrides(overrides))
    return TrainConfig.from_dict(data)


def dump_config(cfg: TrainConfig, path) -> None:
    Path(path).write_text(tomli_w.dumps(cfg.to_dict()))
