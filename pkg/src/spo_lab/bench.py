"""Synthetic ratio-optimization bench and run-aggregation helpers.

The bench treats every probability ratio as a free variable and runs plain
gradient ascent on one per-sample objective, with advantages drawn from a
standard normal. This isolates how each objective steers ratios.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigError, EmptyBatchError
from .objectives import OBJECTIVES, ObjectiveKind

DEFAULT_SIZE = 1024
DEFAULT_LR = 1e-3
DEFAULT_STEPS = 10_000
DEFAULT_EPS = 0.2

_KERNEL_CODE = {
    ObjectiveKind.PPO_CLIP: kernels.PPO_CLIP,
    ObjectiveKind.SPO: kernels.SPO,
    ObjectiveKind.SIMPLE: kernels.SIMPLE,
}


@dataclass
class SyntheticBatch:
    advantages: np.ndarray
    ratios: np.ndarray
    eps: float = DEFAULT_EPS
    lr: float = DEFAULT_LR
    num_steps: int = DEFAULT_STEPS

    def __post_init__(self):
        self.advantages = np.asarray(self.advantages, dtype=np.float64)
        self.ratios = np.maximum(np.asarray(self.ratios, dtype=np.float64), kernels.RATIO_FLOOR)
        if self.advantages.shape != self.ratios.shape or self.advantages.ndim != 1:
            raise ConfigError("advantages and ratios must be equal-length vectors")
        if not (self.eps > 0 and self.lr > 0 and self.num_steps >= 0):
            raise ConfigError("need eps > 0, lr > 0, num_steps >= 0")

    def subset(self, mask) -> "SyntheticBatch":
        return SyntheticBatch(self.advantages[mask], self.ratios[mask], self.eps, self.lr, self.num_steps)


def make_synthetic_batch(
    seed: int = 0,
    size: int = DEFAULT_SIZE,
    eps: float = DEFAULT_EPS,
    lr: float = DEFAULT_LR,
    num_steps: int = DEFAULT_STEPS,
) -> SyntheticBatch:
    adv = np.random.default_rng(seed).standard_normal(size)
    return SyntheticBatch(adv, np.ones(size), eps, lr, num_steps)


@dataclass
class BenchTrajectory:
    kind: ObjectiveKind
    final_ratios: np.ndarray
    mean_surrogate: np.ndarray  # index 0 is the initial state
    mean_ratio_dev: np.ndarray
    max_ratio_dev: np.ndarray

    @property
    def num_steps(self) -> int:
        return self.mean_surrogate.size - 1

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "mean_surrogate", "mean_ratio_dev", "max_ratio_dev"])
            for i in range(self.mean_surrogate.size):
                w.writerow([i, repr(float(self.mean_surrogate[i])), repr(float(self.mean_ratio_dev[i])),
                            repr(float(self.max_ratio_dev[i]))])


def run_ratio_bench(batch: SyntheticBatch, kind, use_numba=None) -> BenchTrajectory:
    kind = ObjectiveKind.parse(kind)
    r, surr, mean_dev, max_dev = kernels.ratio_ascent(
        batch.advantages, batch.ratios, batch.eps, batch.lr, batch.num_steps, _KERNEL_CODE[kind], use_numba
    )
    return BenchTrajectory(kind, r, surr, mean_dev, max_dev)


def ratio_gradients(batch: SyntheticBatch, ratios, kind) -> np.ndarray:
    _, g = OBJECTIVES[ObjectiveKind.parse(kind)]
    return np.asarray(g(ratios, batch.advantages, batch.eps), dtype=np.float64)


def run_until_converged(
    batch: SyntheticBatch,
    kind,
    grad_tol: float = 1e-8,
    max_steps: int = 5_000_000,
    chunk: int = 50_000,
) -> tuple[np.ndarray, int, bool]:
    """Keep stepping until ``max |df/dr| < grad_tol``.

    Returns (ratios, steps taken, converged). ``batch.num_steps`` is ignored.
    """
    kind = ObjectiveKind.parse(kind)
    r = batch.ratios.copy()
    steps = 0
    while True:
        if np.max(np.abs(ratio_gradients(batch, r, kind))) < grad_tol:
            return r, steps, True
        if steps >= max_steps:
            return r, steps, False
        n = min(chunk, max_steps - steps)
        r, *_ = kernels.ratio_ascent(batch.advantages, r, batch.eps, batch.lr, n, _KERNEL_CODE[kind])
        steps += n


def steps_to_boundary(batch: SyntheticBatch, kind, mask=None, tol: float = 1e-3) -> int | None:
    """First step at which the mean ``|r-1|`` of the selected samples is
    within ``tol`` of ``eps``; ``None`` if that never happens in ``num_steps``."""
    sub = batch if mask is None else batch.subset(mask)
    if sub.advantages.size == 0:
        raise EmptyBatchError("no samples selected")
    traj = run_ratio_bench(sub, kind)
    hits = np.flatnonzero(np.abs(traj.mean_ratio_dev - batch.eps) <= tol)
    return int(hits[0]) if hits.size else None


# --------------------------------------------------------------------------
# Cross-run reporting
# --------------------------------------------------------------------------

def normalized_score(score: float, min_ref: float, max_ref: float) -> float:
    if not max_ref > min_ref:
        raise ConfigError(f"degenerate reference range [{min_ref}, {max_ref}]")
    return (score - min_ref) / (max_ref - min_ref)


@dataclass
class RunAggregate:
    per_run: list[float]
    mean: float
    std: float
    max_ratio_deviation: list[float]


def tail_mean(returns, last_fraction: float) -> float:
    values = np.asarray(returns, dtype=np.float64)
    if not 0 < last_fraction <= 1:
        raise ConfigError(f"last_fraction must lie in (0, 1], got {last_fraction}")
    k = max(1, math.ceil(last_fraction * values.size - 1e-9))
    window = values[values.size - k:] if values.size else values
    window = window[np.isfinite(window)]
    if window.size == 0:
        raise EmptyBatchError("no finite returns in the final window")
    return float(window.mean())


def aggregate_runs(paths, last_fraction: float = 0.1) -> RunAggregate:
    """Mean episode return over the final fraction of each run's records."""
    from .trainer import read_metrics

    paths = [Path(p) for p in paths]
    if not paths:
        raise ConfigError("need at least one metrics file")
    per_run, max_devs = [], []
    for p in paths:
        rows = read_metrics(p)
        per_run.append(tail_mean([r["mean_episode_return"] for r in rows], last_fraction))
        max_devs.append(max((r["max_ratio_deviation_so_far"] for r in rows), default=math.nan))
    arr = np.array(per_run)
    return RunAggregate(per_run, float(arr.mean()), float(arr.std()), max_devs)
