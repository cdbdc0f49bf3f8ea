"""Per-sample ratio objectives and the composite training loss.

Every ``f_*`` function is elementwise: ``r`` and ``A`` may be scalars or
broadcastable arrays.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyBatchError, ShapeError


class ObjectiveKind(str, enum.Enum):
    PPO_CLIP = "ppo_clip"
    SPO = "spo"
    SIMPLE = "simple"

    @classmethod
    def parse(cls, value) -> "ObjectiveKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"ppo": "ppo_clip", "ppoclip": "ppo_clip", "simplealigned": "simple", "simple_aligned": "simple"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown objective {value!r}; expected one of {[k.value for k in cls]}") from None


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def _check_eps(eps):
    if not np.all(np.asarray(eps) > 0):
        raise ConfigError(f"eps must be positive, got {eps}")


def f_spo(r, A, eps):
    _check_eps(eps)
    r = np.asarray(r, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    return _out(r * A - np.abs(A) / (2.0 * eps) * (r - 1.0) ** 2)


def f_spo_grad(r, A, eps):
    _check_eps(eps)
    r = np.asarray(r, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    return _out(A - np.abs(A) / eps * (r - 1.0))


def f_ppo(r, A, eps):
    r = np.asarray(r, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    return _out(np.minimum(r * A, np.clip(r, 1.0 - eps, 1.0 + eps) * A))


def f_ppo_grad(r, A, eps):
    # at the kinks r = 1 +- eps the interior branch is taken
    r = np.asarray(r, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    active = ((A > 0) & (r <= 1.0 + eps)) | ((A < 0) & (r >= 1.0 - eps))
    return _out(np.where(active, A, 0.0))


def f_simple(r, A, eps):
    r = np.asarray(r, dtype=np.float64)
    return _out(-((r - 1.0 - np.sign(A) * eps) ** 2))


def f_simple_grad(r, A, eps):
    r = np.asarray(r, dtype=np.float64)
    return _out(-2.0 * (r - 1.0 - np.sign(A) * eps))


OBJECTIVES = {
    ObjectiveKind.PPO_CLIP: (f_ppo, f_ppo_grad),
    ObjectiveKind.SPO: (f_spo, f_spo_grad),
    ObjectiveKind.SIMPLE: (f_simple, f_simple_grad),
}


def _batch(ratios, advantages):
    ratios = np.asarray(ratios, dtype=np.float64).ravel()
    advantages = np.asarray(advantages, dtype=np.float64).ravel()
    if ratios.size == 0:
        raise EmptyBatchError("empty batch")
    if ratios.shape != advantages.shape:
        raise ShapeError(f"{ratios.size} ratios vs {advantages.size} advantages")
    return ratios, advantages


def policy_loss(ratios, advantages, kind, eps) -> float:
    """Negated batch mean of the selected per-sample objective."""
    r, A = _batch(ratios, advantages)
    f, _ = OBJECTIVES[ObjectiveKind.parse(kind)]
    return -float(np.mean(f(r, A, eps)))


def policy_loss_grad(ratios, advantages, kind, eps) -> np.ndarray:
    """d policy_loss / d r_i for each sample."""
    r, A = _batch(ratios, advantages)
    _, g = OBJECTIVES[ObjectiveKind.parse(kind)]
    return -np.asarray(g(r, A, eps), dtype=np.float64) / r.size


def value_loss(values, returns) -> float:
    values = np.asarray(values, dtype=np.float64).ravel()
    returns = np.asarray(returns, dtype=np.float64).ravel()
    if values.size == 0:
        raise EmptyBatchError("empty batch")
    if values.shape != returns.shape:
        raise ShapeError(f"{values.size} values vs {returns.size} returns")
    return 0.5 * float(np.mean((values - returns) ** 2))


def total_loss(policy_loss: float, value_loss: float, entropy: float, c1: float = 0.5, c2: float = 0.01) -> float:
    return policy_loss + c1 * value_loss - c2 * entropy


def normalize_advantages(advantages, std_floor: float = 1e-8) -> np.ndarray:
    a = np.asarray(advantages, dtype=np.float64)
    return (a - a.mean()) / max(a.std(), std_floor)


@dataclass
class LossBreakdown:
    policy_loss: float
    value_loss: float
    entropy: float
    total: float
    mean_ratio_deviation: float
    clip_fraction: float

    @classmethod
    def evaluate(cls, ratios, advantages, values, returns, entropy, kind, eps, c1, c2) -> "LossBreakdown":
        lp = policy_loss(ratios, advantages, kind, eps)
        lv = value_loss(values, returns)
        r = np.asarray(ratios, dtype=np.float64)
        dev = np.abs(r - 1.0)
        return cls(
            policy_loss=lp,
            value_loss=lv,
            entropy=float(entropy),
            total=total_loss(lp, lv, float(entropy), c1, c2),
            mean_ratio_deviation=float(dev.mean()),
            clip_fraction=float(np.mean(dev > eps)),
        )
