"""Property suites behind ``spo-lab verify``.

Each suite is deterministic (fixed internal seeds) and reports how many
cases it checked, the worst error seen and whether every case passed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import divergence, grad, kernels, policy as pol, tabular
from .kernels import gae_advantages
from .objectives import f_ppo, f_ppo_grad

GRID_LO, GRID_HI, GRID_POINTS = 0.0, 3.0, 300_001  # step 1e-5


@dataclass
class SuiteResult:
    name: str
    cases: int
    max_error: float
    passed: bool
    detail: str = ""


def maximizer_span(kind, A, eps) -> tuple[float, float]:
    """(lowest, highest) grid point of [0, 3] attaining the objective's maximum."""
    return kernels.grid_maximizer_span(kind, A, eps, GRID_LO, GRID_HI, GRID_POINTS)


def suite_epsilon_aligned(n: int = 1000, seed: int = 11) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    ppo_failures = 0
    for _ in range(n):
        A = rng.uniform(0.05, 3.0) * rng.choice([-1.0, 1.0])
        eps = rng.uniform(0.01, 0.99)
        target = 1.0 + math.copysign(eps, A)
        for kind in (kernels.SPO, kernels.SIMPLE):
            lo, hi = maximizer_span(kind, A, eps)
            worst = max(worst, abs(lo - target), abs(hi - target))
        lo, hi = maximizer_span(kernels.PPO_CLIP, A, eps)
        # ppo's maximizer set runs to the grid edge on the side of sign(A)
        edge_reached = hi >= GRID_HI - 1e-9 if A > 0 else lo <= GRID_LO + 1e-9
        if edge_reached and max(abs(lo - target), abs(hi - target)) > 1e-4:
            ppo_failures += 1
    passed = worst <= 1e-4 and ppo_failures == n
    return SuiteResult("epsilon_aligned", 3 * n, worst, passed, f"ppo fails on {ppo_failures}/{n}")


def _ppo_case_table(r, A, eps):
    if A > 0 and r <= 1 + eps:
        return A
    if A < 0 and r >= 1 - eps:
        return A
    return 0.0


def suite_ppo_gradient(n: int = 10_000, seed: int = 12, h: float = 1e-6) -> SuiteResult:
    rng = np.random.default_rng(seed)
    r = rng.uniform(0.0, 2.5, n)
    A = rng.standard_normal(n)
    eps = rng.uniform(0.05, 0.5, n)
    table = np.array([_ppo_case_table(*args) for args in zip(r, A, eps)])
    table_err = float(np.max(np.abs(f_ppo_grad(r, A, eps) - table)))
    away = (np.abs(r - (1 + eps)) > 1e-3) & (np.abs(r - (1 - eps)) > 1e-3)
    fd = (f_ppo(r + h, A, eps) - f_ppo(r - h, A, eps)) / (2 * h)
    fd_err = float(np.max(np.abs(fd - f_ppo_grad(r, A, eps))[away]))
    worst = max(table_err, fd_err)
    return SuiteResult("ppo_gradient", 2 * n, worst, table_err == 0.0 and fd_err <= 1e-7)


def suite_tv_identity(pairs: int = 20, seed: int = 13) -> SuiteResult:
    rng = np.random.default_rng(seed)
    mdp = tabular.random_tabular_mdp(seed=0)
    worst = 0.0
    for _ in range(pairs):
        pi = tabular.random_policy(mdp.num_states, mdp.num_actions, rng, floor=0.05)
        pi_t = tabular.random_policy(mdp.num_states, mdp.num_actions, rng)
        lhs, rhs = divergence.tv_trust_region_sides(mdp, pi, pi_t)
        worst = max(worst, abs(lhs - rhs))
    return SuiteResult("tv_identity", pairs, worst, worst <= 1e-12)


def random_simplex_pair(rng, k=None):
    k = k or int(rng.integers(2, 9))
    conc = rng.choice([0.1, 1.0, 10.0])
    p = rng.dirichlet(np.full(k, conc))
    q = rng.dirichlet(np.full(k, conc))
    # dirichlet with small concentration can return exact zeros in q
    q = (q + 1e-300) / (q + 1e-300).sum()
    return p, q


def suite_pinsker(n: int = 10_000, seed: int = 14) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst_slack = math.inf
    inclusion_ok = True
    for _ in range(n):
        p, q = random_simplex_pair(rng)
        rep = divergence.divergence_report(p, q)
        worst_slack = min(worst_slack, rep.pinsker_slack)
        delta_kl = rng.exponential(0.5)
        if rep.kl <= delta_kl and rep.tv > math.sqrt(delta_kl / 2) + 1e-12:
            inclusion_ok = False
    return SuiteResult("pinsker", n, max(0.0, -worst_slack), worst_slack >= -1e-12 and inclusion_ok,
                       f"min slack {worst_slack:.3g}")


def suite_kl_escape(targets=(1.0, 5.0, 10.0, 50.0), eps: float = 0.2) -> SuiteResult:
    ok = True
    worst = 0.0
    for target in targets:
        p, q = divergence.kl_escape_demo(3, eps, target)
        r0 = q[0] / p[0]
        kl = divergence.kl_categorical(p, q)
        worst = max(worst, abs(r0 - 1.0))
        ok &= r0 == 1.0 and kl >= target
    return SuiteResult("kl_escape", len(targets), worst, bool(ok))


def suite_performance_difference(n: int = 100, seed: int = 15) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n):
        mdp = tabular.random_tabular_mdp(
            seed=int(rng.integers(2**31)),
            num_states=int(rng.integers(2, 9)),
            num_actions=int(rng.integers(2, 5)),
            gamma=float(rng.uniform(0.5, 0.98)),
            point_start=bool(i % 2),
        )
        pi = tabular.random_policy(mdp.num_states, mdp.num_actions, rng)
        pi_t = tabular.random_policy(mdp.num_states, mdp.num_actions, rng)
        lhs, rhs = tabular.performance_difference_check(mdp, pi, pi_t)
        worst = max(worst, abs(lhs - rhs))
    return SuiteResult("performance_difference", n, worst, worst < 1e-8)


def gae_double_loop(rewards, values, dones, bootstrap, gamma, lam):
    """Brute-force sum_k (gamma*lam)^k delta_{t+k}, stopping at episode ends."""
    T = len(rewards)
    next_v = list(values[1:]) + [bootstrap]
    deltas = [rewards[t] + gamma * next_v[t] * (1 - dones[t]) - values[t] for t in range(T)]
    adv = np.zeros(T)
    for t in range(T):
        total, weight = 0.0, 1.0
        for k in range(t, T):
            total += weight * deltas[k]
            if dones[k]:
                break
            weight *= gamma * lam
        adv[t] = total
    return adv


def suite_gae_oracle(n: int = 1000, seed: int = 16) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        T = int(rng.integers(1, 40))
        rewards = rng.standard_normal(T)
        values = rng.standard_normal(T)
        dones = (rng.random(T) < 0.15).astype(float)
        boot = float(rng.standard_normal())
        gamma, lam = rng.uniform(0.8, 1.0), rng.uniform(0.0, 1.0)
        fast = gae_advantages(rewards[:, None], values[:, None], dones[:, None], np.array([boot]), gamma, lam)[:, 0]
        slow = gae_double_loop(rewards, values, dones, boot, gamma, lam)
        worst = max(worst, float(np.max(np.abs(fast - slow))))
    return SuiteResult("gae_oracle", n, worst, worst <= 1e-10)


def relative_error(a, b, floor: float = 1e-8) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def finite_difference_mlp(params: grad.MlpParams, x, out_grad, h: float = 1e-5) -> list[np.ndarray]:
    """Central differences of sum(forward * out_grad) for every parameter entry."""
    out = []
    for arr in params.arrays():
        fd = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            up = float(np.sum(grad.forward(params, x) * out_grad))
            arr[idx] = orig - h
            down = float(np.sum(grad.forward(params, x) * out_grad))
            arr[idx] = orig
            fd[idx] = (up - down) / (2 * h)
        out.append(fd)
    return out


def suite_grad_check(n: int = 100, seed: int = 17) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        depth = int(rng.integers(1, 4))
        sizes = [int(s) for s in rng.integers(1, 9, size=depth + 1)]
        params = grad.init_mlp(sizes, rng, output_gain=1.0)
        for b in params.biases:
            b[:] = rng.standard_normal(b.shape) * 0.5
        x = rng.standard_normal(sizes[0])
        g_out = rng.standard_normal(sizes[-1])
        analytic = grad.backward(params, x, g_out).arrays()
        numeric = finite_difference_mlp(params, x, g_out)
        for a, f in zip(analytic, numeric):
            # the floor keeps ~1e-10 finite-difference noise on near-zero entries from dominating
            worst = max(worst, float(np.max(relative_error(a, f, floor=1e-4))))
    return SuiteResult("grad_check", n, worst, worst <= 1e-4)


def suite_logprob_grad(n: int = 200, seed: int = 18, h: float = 1e-6) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        k = int(rng.integers(2, 7))
        logits = rng.standard_normal(k) * 2
        a = int(rng.integers(k))
        g = pol.log_prob_grad_logits(pol.categorical(logits), a)
        fd = np.zeros(k)
        for j in range(k):
            e = np.zeros(k)
            e[j] = h
            fd[j] = (pol.log_prob(pol.categorical(logits + e), a) - pol.log_prob(pol.categorical(logits - e), a)) / (2 * h)
        worst = max(worst, float(np.max(np.abs(g - fd))))

        d = int(rng.integers(1, 4))
        mean, log_std = rng.standard_normal(d), rng.uniform(-1, 0.5, d)
        x = rng.standard_normal(d)
        gm, gs = pol.log_prob_grad_gaussian(pol.gaussian(mean, log_std), x)
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            fdm = (pol.log_prob(pol.gaussian(mean + e, log_std), x) - pol.log_prob(pol.gaussian(mean - e, log_std), x)) / (2 * h)
            fds = (pol.log_prob(pol.gaussian(mean, log_std + e), x) - pol.log_prob(pol.gaussian(mean, log_std - e), x)) / (2 * h)
            worst = max(worst, abs(gm[j] - fdm), abs(gs[j] - fds))
    return SuiteResult("logprob_grad", 2 * n, float(worst), bool(worst <= 1e-5))


SUITES: dict[str, Callable[[], SuiteResult]] = {
    "epsilon_aligned": suite_epsilon_aligned,
    "ppo_gradient": suite_ppo_gradient,
    "tv_identity": suite_tv_identity,
    "pinsker": suite_pinsker,
    "kl_escape": suite_kl_escape,
    "performance_difference": suite_performance_difference,
    "gae_oracle": suite_gae_oracle,
    "grad_check": suite_grad_check,
    "logprob_grad": suite_logprob_grad,
}


def run_suites(names=None) -> list[SuiteResult]:
    names = list(SUITES) if not names else list(names)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}")
    return [SUITES[n]() for n in names]
