"""TV and KL divergences, ratio deviation, and the unbounded-KL construction."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, EmptyBatchError, InvalidDistributionError, ShapeError
from .tabular import TabularMdp, check_policy, exact_visitation

SIMPLEX_TOL = 1e-9
# KL(p||q) when q misses part of p's support: a value, not an exception
INFINITE_KL = math.inf


def _simplex(p, name="p") -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise InvalidDistributionError(f"{name} must be a nonempty vector")
    if np.any(p < 0) or not np.all(np.isfinite(p)) or abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise InvalidDistributionError(f"{name} is not a probability vector (sum={p.sum()!r})")
    return p


def _pair(p, q):
    p, q = _simplex(p, "p"), _simplex(q, "q")
    if p.shape != q.shape:
        raise ShapeError(f"distributions over {p.size} and {q.size} outcomes")
    return p, q


def tv_categorical(p, q) -> float:
    p, q = _pair(p, q)
    return 0.5 * float(np.abs(p - q).sum())


def kl_categorical(p, q) -> float:
    p, q = _pair(p, q)
    support = p > 0
    if np.any(q[support] == 0):
        return INFINITE_KL
    ps, qs = p[support], q[support]
    return max(float(np.sum(ps * (np.log(ps) - np.log(qs)))), 0.0)


def kl_gaussian_diag(mean1, log_std1, mean2, log_std2) -> float:
    """KL(N(mean1, std1^2) || N(mean2, std2^2)) summed over independent dims."""
    m1, s1, m2, s2 = (np.atleast_1d(np.asarray(x, dtype=np.float64)) for x in (mean1, log_std1, mean2, log_std2))
    if not (m1.shape == s1.shape == m2.shape == s2.shape):
        raise ShapeError("all Gaussian parameters must share one dimension")
    var_ratio = np.exp(2.0 * (s1 - s2))
    maha = (m1 - m2) ** 2 * np.exp(-2.0 * s2)
    return float(np.sum(s2 - s1 + 0.5 * (var_ratio + maha - 1.0)))


@dataclass
class DivergenceReport:
    tv: float
    kl: float
    pinsker_slack: float


def divergence_report(p, q) -> DivergenceReport:
    tv = tv_categorical(p, q)
    kl = kl_categorical(p, q)
    return DivergenceReport(tv, kl, math.sqrt(kl / 2.0) - tv)


def ratio_deviation(ratios) -> float:
    r = np.asarray(ratios, dtype=np.float64).ravel()
    if r.size == 0:
        raise EmptyBatchError("ratio deviation of an empty batch")
    if np.any(r <= 0):
        raise ValueError("probability ratios must be positive")
    return float(np.mean(np.abs(r - 1.0)))


def tv_trust_region_sides(mdp: TabularMdp, pi, pi_tilde) -> tuple[float, float]:
    """Exact E_{s~rho_pi} TV(pi, pi_tilde)[s] and 1/2 E_{s~rho_pi, a~pi} |ratio - 1|.

    ``pi`` must be strictly positive wherever the ratio is evaluated.
    """
    pi = check_policy(mdp, pi)
    pi_tilde = check_policy(mdp, pi_tilde)
    if np.any(pi <= 0):
        raise InvalidDistributionError("behaviour policy needs full support for ratios")
    rho = exact_visitation(mdp, pi)
    tv = np.array([tv_categorical(pi[s], pi_tilde[s]) for s in range(mdp.num_states)])
    expected_tv = float(rho @ tv)
    ratios = pi_tilde / pi
    half_dev = 0.5 * float(rho @ np.sum(pi * np.abs(ratios - 1.0), axis=1))
    return expected_tv, half_dev


def kl_escape_demo(num_actions: int, eps: float, target_kl: float) -> tuple[np.ndarray, np.ndarray]:
    """A pair (p, q) whose ratio at action 0 is exactly 1, yet KL(p||q) >= target.

    p is uniform. q keeps p's mass on action 0, puts almost all of the rest on
    action 1 and spreads a tiny ``delta`` over the remaining actions; KL grows
    without bound as ``delta -> 0``, so every finite target is reachable.
    """
    if num_actions < 3:
        raise ConfigError("the construction needs at least 3 actions")
    if not eps > 0:
        raise ConfigError("eps must be positive")
    if not target_kl >= 0 or math.isinf(target_kl) or math.isnan(target_kl):
        raise ConfigError(f"target_kl must be finite and nonnegative, got {target_kl}")
    n = num_actions
    p = np.full(n, 1.0 / n)
    if target_kl == 0:
        return p, p.copy()

    def build(log_delta: float) -> np.ndarray:
        delta = math.exp(log_delta)
        q = np.empty(n)
        q[0] = p[0]
        q[2:] = delta / (n - 2)
        q[1] = 1.0 - q[0] - q[2:].sum()
        return q

    def gap(log_delta: float) -> float:
        q = build(log_delta)
        return float(np.sum(p * (np.log(p) - np.log(q)))) - target_kl

    hi = math.log((n - 2) / n)  # delta equal to the uniform mass: KL = 0
    lo = hi - 1.0
    while gap(lo) < 0:
        lo = 2.0 * lo - 1.0
        if lo < -700:
            raise ConfigError(f"target_kl {target_kl} not reachable in double precision")
    root = brentq(gap, lo, hi, xtol=1e-14)
    # step slightly past the root so the target is met, not just approached
    q = build(root - 1e-9)
    if kl_categorical(p, q) < target_kl:
        q = build(lo)
    return p, q
