"""Hot inner loops, each with a numba kernel and a numpy twin.

``USE_NUMBA`` (from the ``SPO_LAB_NUMBA`` environment flag) picks the path at
call time. The two paths agree to rounding; within one path results are
bit-reproducible.
"""
import numpy as np

from . import _jit
from ._jit import jit

PPO_CLIP, SPO, SIMPLE = 0, 1, 2
RATIO_FLOOR = 1e-6


# --------------------------------------------------------------------------
# GAE backward recursion over a (T, N) block of worker trajectories
# --------------------------------------------------------------------------

@jit
def _gae_numba(rewards, values, dones, bootstrap, gamma, lam):
    T, N = rewards.shape
    adv = np.zeros((T, N))
    for n in range(N):
        last = 0.0
        for t in range(T - 1, -1, -1):
            next_value = bootstrap[n] if t == T - 1 else values[t + 1, n]
            live = 1.0 - dones[t, n]
            delta = rewards[t, n] + gamma * next_value * live - values[t, n]
            last = delta + gamma * lam * live * last
            adv[t, n] = last
    return adv


def _gae_numpy(rewards, values, dones, bootstrap, gamma, lam):
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    next_values = np.concatenate([values[1:], bootstrap[None, :]], axis=0)
    live = 1.0 - dones
    deltas = rewards + gamma * next_values * live - values
    last = np.zeros(rewards.shape[1])
    for t in range(T - 1, -1, -1):
        last = deltas[t] + gamma * lam * live[t] * last
        adv[t] = last
    return adv


def gae_advantages(rewards, values, dones, bootstrap, gamma, lam, use_numba=None):
    rewards = np.ascontiguousarray(rewards, dtype=np.float64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    dones = np.ascontiguousarray(dones, dtype=np.float64)
    bootstrap = np.ascontiguousarray(bootstrap, dtype=np.float64)
    if use_numba is None:
        use_numba = _jit.USE_NUMBA
    fn = _gae_numba if use_numba else _gae_numpy
    return fn(rewards, values, dones, bootstrap, float(gamma), float(lam))


# --------------------------------------------------------------------------
# Direct gradient ascent on free probability ratios
# --------------------------------------------------------------------------

@jit
def _ratio_ascent_numba(advantages, ratios, eps, lr, num_steps, kind):
    n = advantages.shape[0]
    r = ratios.copy()
    surrogate = np.empty(num_steps + 1)
    mean_dev = np.empty(num_steps + 1)
    max_dev = np.empty(num_steps + 1)
    for step in range(num_steps + 1):
        if step > 0:
            for i in range(n):
                a = advantages[i]
                if kind == 1:
                    g = a - abs(a) / eps * (r[i] - 1.0)
                elif kind == 2:
                    s = 1.0 if a > 0 else (-1.0 if a < 0 else 0.0)
                    g = -2.0 * (r[i] - 1.0 - s * eps)
                else:
                    if (a > 0 and r[i] <= 1.0 + eps) or (a < 0 and r[i] >= 1.0 - eps):
                        g = a
                    else:
                        g = 0.0
                r[i] = max(r[i] + lr * g, 1e-6)
        acc = 0.0
        dev = 0.0
        worst = 0.0
        for i in range(n):
            acc += r[i] * advantages[i]
            d = abs(r[i] - 1.0)
            dev += d
            if d > worst:
                worst = d
        surrogate[step] = acc / n
        mean_dev[step] = dev / n
        max_dev[step] = worst
    return r, surrogate, mean_dev, max_dev


def _ratio_ascent_numpy(advantages, ratios, eps, lr, num_steps, kind):
    from . import objectives

    grad = {
        PPO_CLIP: objectives.f_ppo_grad,
        SPO: objectives.f_spo_grad,
        SIMPLE: objectives.f_simple_grad,
    }[kind]
    r = ratios.copy()
    surrogate = np.empty(num_steps + 1)
    mean_dev = np.empty(num_steps + 1)
    max_dev = np.empty(num_steps + 1)
    for step in range(num_steps + 1):
        if step > 0:
            r = np.maximum(r + lr * grad(r, advantages, eps), RATIO_FLOOR)
        dev = np.abs(r - 1.0)
        surrogate[step] = np.mean(r * advantages)
        mean_dev[step] = dev.mean()
        max_dev[step] = dev.max()
    return r, surrogate, mean_dev, max_dev


def ratio_ascent(advantages, ratios, eps, lr, num_steps, kind, use_numba=None):
    """Run ``num_steps`` of ``r <- max(r + lr * df/dr, 1e-6)``.

    Returns the final ratios plus per-step mean surrogate ``mean(r*A)``, mean
    ``|r-1|`` and max ``|r-1|``; index 0 is the initial state.
    """
    advantages = np.ascontiguousarray(advantages, dtype=np.float64)
    ratios = np.ascontiguousarray(ratios, dtype=np.float64)
    if use_numba is None:
        use_numba = _jit.USE_NUMBA
    fn = _ratio_ascent_numba if use_numba else _ratio_ascent_numpy
    return fn(advantages, ratios, float(eps), float(lr), int(num_steps), int(kind))


# --------------------------------------------------------------------------
# Dense-grid maximizer span of one per-sample objective
# --------------------------------------------------------------------------

@jit
def _objective_value(kind, r, a, eps):
    if kind == 1:
        return r * a - abs(a) / (2.0 * eps) * (r - 1.0) ** 2
    if kind == 2:
        s = 1.0 if a > 0 else (-1.0 if a < 0 else 0.0)
        return -((r - 1.0 - s * eps) ** 2)
    c = min(max(r, 1.0 - eps), 1.0 + eps)
    return min(r * a, c * a)


@jit
def _grid_span_numba(kind, a, eps, lo, hi, n, tol):
    step = (hi - lo) / (n - 1)
    best = -np.inf
    for i in range(n):
        v = _objective_value(kind, lo + i * step, a, eps)
        if v > best:
            best = v
    first = -1
    last = -1
    for i in range(n):
        if _objective_value(kind, lo + i * step, a, eps) >= best - tol:
            if first < 0:
                first = i
            last = i
    return lo + first * step, lo + last * step


def _grid_span_numpy(kind, a, eps, lo, hi, n, tol):
    from . import objectives

    f = {PPO_CLIP: objectives.f_ppo, SPO: objectives.f_spo, SIMPLE: objectives.f_simple}[kind]
    step = (hi - lo) / (n - 1)
    grid = lo + np.arange(n) * step
    vals = f(grid, a, eps)
    idx = np.flatnonzero(vals >= vals.max() - tol)
    return float(lo + idx[0] * step), float(lo + idx[-1] * step)


def grid_maximizer_span(kind, a, eps, lo=0.0, hi=3.0, n=300_001, tol=1e-12, use_numba=None):
    """Lowest and highest grid point where ``f(r, a, eps)`` is within ``tol`` of its grid max."""
    if use_numba is None:
        use_numba = _jit.USE_NUMBA
    fn = _grid_span_numba if use_numba else _grid_span_numpy
    return fn(int(kind), float(a), float(eps), float(lo), float(hi), int(n), float(tol))
