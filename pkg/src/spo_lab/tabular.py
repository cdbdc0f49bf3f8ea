"""Finite MDPs solved exactly by linear algebra.

A tabular policy is an ``(S, A)`` row-stochastic array.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

ROW_TOL = 1e-12


@dataclass
class TabularMdp:
    P: np.ndarray  # (S, A, S'): P[s, a, s'] = P(s' | s, a)
    rewards: np.ndarray  # (S, A)
    gamma: float
    rho0: np.ndarray  # (S,)

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.rho0 = np.asarray(self.rho0, dtype=np.float64)
        S, A, S2 = self.P.shape
        if S != S2 or self.rewards.shape != (S, A) or self.rho0.shape != (S,):
            raise ConfigError("inconsistent MDP table shapes")
        if np.any(self.P < 0) or np.max(np.abs(self.P.sum(axis=2) - 1.0)) > ROW_TOL:
            raise ConfigError("transition rows must be probability vectors")
        if np.any(self.rho0 < 0) or abs(self.rho0.sum() - 1.0) > ROW_TOL:
            raise ConfigError("initial distribution must sum to 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in [0, 1) for exact evaluation, got {self.gamma}")

    @property
    def num_states(self) -> int:
        return self.P.shape[0]

    @property
    def num_actions(self) -> int:
        return self.P.shape[1]


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    x = x / x.sum(axis=-1, keepdims=True)
    # push the rounding residue into the largest entry so rows sum to 1 tightly
    idx = np.argmax(x, axis=-1)
    resid = 1.0 - x.sum(axis=-1)
    np.put_along_axis(x, idx[..., None], np.take_along_axis(x, idx[..., None], -1) + resid[..., None], -1)
    return x


def random_tabular_mdp(
    seed: int = 0,
    num_states: int = 8,
    num_actions: int = 3,
    gamma: float = 0.9,
    point_start: bool = True,
) -> TabularMdp:
    rng = np.random.default_rng(seed)
    P = _normalize_rows(rng.random((num_states, num_actions, num_states)) ** 2)
    rewards = rng.standard_normal((num_states, num_actions))
    if point_start:
        rho0 = np.zeros(num_states)
        rho0[0] = 1.0
    else:
        rho0 = _normalize_rows(rng.random(num_states))
    return TabularMdp(P, rewards, gamma, rho0)


def random_policy(num_states: int, num_actions: int, rng: np.random.Generator, floor: float = 0.0) -> np.ndarray:
    """Random strictly positive policy table (Dirichlet(1) rows, plus ``floor``)."""
    return _normalize_rows(rng.dirichlet(np.ones(num_actions), size=num_states) + floor)


def check_policy(mdp: TabularMdp, policy) -> np.ndarray:
    policy = np.asarray(policy, dtype=np.float64)
    if policy.shape != (mdp.num_states, mdp.num_actions):
        raise ConfigError(f"policy shape {policy.shape} does not match MDP")
    if np.any(policy < 0) or np.max(np.abs(policy.sum(axis=1) - 1.0)) > 1e-9:
        raise ConfigError("policy rows must be probability vectors")
    return policy


def state_transitions(mdp: TabularMdp, policy) -> np.ndarray:
    """M[s, s'] = sum_a pi(a|s) P(s'|s, a)."""
    return np.einsum("sa,sat->st", check_policy(mdp, policy), mdp.P)


def exact_visitation(mdp: TabularMdp, policy) -> np.ndarray:
    """Normalized discounted state visitation, from rho = (1-g) rho0 + g M^T rho."""
    M = state_transitions(mdp, policy)
    S = mdp.num_states
    lhs = np.eye(S) - mdp.gamma * M.T
    rhs = (1.0 - mdp.gamma) * mdp.rho0
    try:
        rho = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - cannot happen for gamma < 1
        raise ConfigError("singular visitation system") from exc
    return rho


def exact_q_v_advantage(mdp: TabularMdp, policy) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    policy = check_policy(mdp, policy)
    M = state_transitions(mdp, policy)
    r_pi = np.sum(policy * mdp.rewards, axis=1)
    V = np.linalg.solve(np.eye(mdp.num_states) - mdp.gamma * M, r_pi)
    Q = mdp.rewards + mdp.gamma * mdp.P @ V
    return Q, V, Q - V[:, None]


def expected_return(mdp: TabularMdp, policy) -> float:
    _, V, _ = exact_q_v_advantage(mdp, policy)
    return float(mdp.rho0 @ V)


def performance_difference_check(mdp: TabularMdp, pi, pi_tilde) -> tuple[float, float]:
    """Both sides of the performance difference identity.

    lhs = eta(pi_tilde) - eta(pi) by exact evaluation; rhs re-expresses it
    through the advantage of ``pi`` weighted by the visitation of ``pi_tilde``.
    """
    lhs = expected_return(mdp, pi_tilde) - expected_return(mdp, pi)
    _, _, adv = exact_q_v_advantage(mdp, pi)
    rho_tilde = exact_visitation(mdp, pi_tilde)
    rhs = float(rho_tilde @ np.sum(np.asarray(pi_tilde) * adv, axis=1)) / (1.0 - mdp.gamma)
    return lhs, rhs


def greedy_policy(Q: np.ndarray) -> np.ndarray:
    pi = np.zeros_like(Q)
    pi[np.arange(Q.shape[0]), np.argmax(Q, axis=1)] = 1.0
    return pi
