"""Categorical and diagonal-Gaussian action heads.

All functions accept a leading batch axis: ``logits`` of shape ``(n,)`` or
``(B, n)``, Gaussian ``mean`` of shape ``(d,)`` or ``(B, d)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import ActionSpaceError, InvalidDistributionError, RatioOverflowError

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
MAX_LOG_RATIO = 700.0


@dataclass(frozen=True)
class PolicyDistribution:
    kind: Literal["categorical", "gaussian"]
    logits: np.ndarray | None = None
    mean: np.ndarray | None = None
    log_std: np.ndarray | None = None

    @property
    def is_categorical(self) -> bool:
        return self.kind == "categorical"


@dataclass(frozen=True)
class ActionSample:
    action: int | np.ndarray
    log_prob: float | np.ndarray


def categorical(logits) -> PolicyDistribution:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim not in (1, 2) or logits.shape[-1] < 1:
        raise InvalidDistributionError(f"bad logits shape {logits.shape}")
    if np.any(np.isnan(logits)):
        raise InvalidDistributionError("NaN logits")
    return PolicyDistribution("categorical", logits=logits)


def gaussian(mean, log_std) -> PolicyDistribution:
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.clip(np.asarray(log_std, dtype=np.float64), LOG_STD_MIN, LOG_STD_MAX)
    if mean.shape[-1:] != log_std.shape[-1:]:
        raise InvalidDistributionError(f"mean {mean.shape} and log_std {log_std.shape} differ")
    return PolicyDistribution("gaussian", mean=mean, log_std=log_std)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def probs(dist: PolicyDistribution) -> np.ndarray:
    return np.exp(log_softmax(dist.logits))


def _discrete_actions(dist: PolicyDistribution, action) -> np.ndarray:
    a = np.asarray(action)
    n = dist.logits.shape[-1]
    if not np.issubdtype(a.dtype, np.integer):
        if np.any(a != np.round(a)):
            raise ActionSpaceError(f"non-integer discrete action {action!r}")
        a = a.astype(np.int64)
    if np.any(a < 0) or np.any(a >= n):
        raise ActionSpaceError(f"action {action!r} outside [0, {n})")
    return a


def log_prob(dist: PolicyDistribution, action):
    if dist.is_categorical:
        a = _discrete_actions(dist, action)
        lp = log_softmax(dist.logits)
        if lp.ndim == 1:
            return float(lp[a]) if a.ndim == 0 else lp[a]
        return np.take_along_axis(lp, a.reshape(-1, 1), axis=-1)[:, 0]
    x = np.asarray(action, dtype=np.float64)
    if x.shape[-1:] != dist.mean.shape[-1:]:
        raise ActionSpaceError(f"action dimension {x.shape} does not match {dist.mean.shape}")
    z = (x - dist.mean) * np.exp(-dist.log_std)
    per_dim = -0.5 * z * z - dist.log_std - HALF_LOG_2PI
    out = per_dim.sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def entropy(dist: PolicyDistribution):
    if dist.is_categorical:
        lp = log_softmax(dist.logits)
        p = np.exp(lp)
        # p * lp -> 0 as p -> 0; exp underflow already gives an exact 0 there
        h = -(p * lp).sum(axis=-1)
    else:
        h = (dist.log_std + HALF_LOG_2PI + 0.5).sum(axis=-1)
        if dist.mean.ndim == 2 and np.ndim(h) == 0:
            h = np.full(dist.mean.shape[0], h)
    return float(h) if np.ndim(h) == 0 else h


def mode(dist: PolicyDistribution):
    if dist.is_categorical:
        a = np.argmax(dist.logits, axis=-1)
        return int(a) if np.ndim(a) == 0 else a
    return dist.mean.copy()


def sample(dist: PolicyDistribution, rng: np.random.Generator) -> ActionSample:
    if dist.is_categorical:
        p = probs(dist)
        cdf = np.cumsum(p, axis=-1)
        if p.ndim == 1:
            action = int(min(np.searchsorted(cdf, rng.random(), side="right"), p.size - 1))
        else:
            u = rng.random(p.shape[0])
            action = np.minimum((cdf <= u[:, None]).sum(axis=-1), p.shape[-1] - 1)
    else:
        std = np.exp(dist.log_std)
        action = dist.mean + std * rng.standard_normal(dist.mean.shape)
    return ActionSample(action, log_prob(dist, action))


def ratio(new_log_prob, old_log_prob):
    """``exp(new - old)``; raises instead of returning ``inf``."""
    diff = np.asarray(new_log_prob, dtype=np.float64) - np.asarray(old_log_prob, dtype=np.float64)
    if np.any(~np.isfinite(diff)):
        raise RatioOverflowError(new_log_prob, old_log_prob)
    if np.any(diff > MAX_LOG_RATIO):
        i = int(np.argmax(diff)) if diff.ndim else 0
        new = np.ravel(new_log_prob)[i] if np.ndim(new_log_prob) else new_log_prob
        old = np.ravel(old_log_prob)[i] if np.ndim(old_log_prob) else old_log_prob
        raise RatioOverflowError(float(new), float(old))
    r = np.exp(diff)
    return float(r) if r.ndim == 0 else r


# --------------------------------------------------------------------------
# Analytic derivatives used by the trainer's backward pass
# --------------------------------------------------------------------------

def log_prob_grad_logits(dist: PolicyDistribution, action) -> np.ndarray:
    """d log p(a) / d logits = one_hot(a) - softmax(logits)."""
    a = _discrete_actions(dist, action)
    g = -probs(dist)
    if g.ndim == 1:
        g[a] += 1.0
    else:
        g[np.arange(g.shape[0]), a] += 1.0
    return g


def log_prob_grad_gaussian(dist: PolicyDistribution, action) -> tuple[np.ndarray, np.ndarray]:
    """Returns (d/d mean, d/d log_std) of log p(action), elementwise per dimension."""
    x = np.asarray(action, dtype=np.float64)
    inv_var = np.exp(-2.0 * dist.log_std)
    diff = x - dist.mean
    return diff * inv_var, diff * diff * inv_var - 1.0


def entropy_grad_logits(dist: PolicyDistribution) -> np.ndarray:
    """d H / d logits = -p * (log p + H)."""
    lp = log_softmax(dist.logits)
    p = np.exp(lp)
    h = -(p * lp).sum(axis=-1, keepdims=True)
    return -p * (lp + h)
