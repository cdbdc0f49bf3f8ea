"""Advantage and return targets for a collected rollout.

Arrays are time-major. A batch from ``N`` parallel workers stores
``rewards``, ``dones``, ``values`` and ``log_probs`` as ``(T, N)``; a single
trajectory may use ``(T,)`` and a scalar ``bootstrap_value``.
``dones[t]`` marks that the episode ended with transition ``t``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, EmptyBatchError, SequencingError, ShapeError


@dataclass
class RolloutBatch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    values: np.ndarray
    log_probs: np.ndarray
    bootstrap_value: np.ndarray | float = 0.0
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def __post_init__(self):
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.dones = np.asarray(self.dones, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        self.log_probs = np.asarray(self.log_probs, dtype=np.float64)
        shape = self.rewards.shape
        for name in ("dones", "values", "log_probs"):
            if getattr(self, name).shape != shape:
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, rewards {shape}")
        boot = np.asarray(self.bootstrap_value, dtype=np.float64)
        if boot.shape != shape[1:]:
            raise ShapeError(f"bootstrap_value shape {boot.shape}, expected {shape[1:]}")
        self.bootstrap_value = boot

    def __len__(self) -> int:
        return self.rewards.size

    @property
    def horizon(self) -> int:
        return self.rewards.shape[0]

    def flat(self) -> dict[str, np.ndarray]:
        """Flattened (T*N, ...) views for mini-batch sampling."""
        if self.advantages is None or self.returns is None:
            raise SequencingError("advantages/returns not computed yet")
        n = self.rewards.size
        return {
            "states": np.asarray(self.states).reshape(n, -1),
            "actions": np.asarray(self.actions).reshape(n, *np.shape(self.actions)[self.rewards.ndim:]),
            "log_probs": self.log_probs.reshape(n),
            "values": self.values.reshape(n),
            "advantages": self.advantages.reshape(n),
            "returns": self.returns.reshape(n),
        }


def compute_gae(batch: RolloutBatch, gamma: float, lam: float) -> np.ndarray:
    if not (0.0 <= gamma <= 1.0 and 0.0 <= lam <= 1.0):
        raise ConfigError(f"gamma and lambda must lie in [0, 1], got {gamma}, {lam}")
    if batch.rewards.size == 0:
        raise EmptyBatchError("cannot compute advantages of an empty batch")
    single = batch.rewards.ndim == 1
    as2d = (lambda a: a[:, None]) if single else (lambda a: a)
    adv = kernels.gae_advantages(
        as2d(batch.rewards),
        as2d(batch.values),
        as2d(batch.dones),
        np.atleast_1d(batch.bootstrap_value),
        gamma,
        lam,
    )
    batch.advantages = adv[:, 0] if single else adv
    return batch.advantages


def compute_returns(batch: RolloutBatch) -> np.ndarray:
    if batch.advantages is None:
        raise SequencingError("compute_gae must run before compute_returns")
    batch.returns = batch.values + batch.advantages
    return batch.returns
