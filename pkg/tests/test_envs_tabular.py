import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spo_lab import tabular
from spo_lab.envs import ENV_IDS, CartPole, GridMdpEnv, PointMass, make_env
from spo_lab.errors import ActionSpaceError, ConfigError, EnvFault


def cartpole_oracle(state, action):
    # classic cart-pole equations of motion, Euler step of 0.02 s
    x, xd, th, thd = state
    g, mc, mp, l, tau = 9.8, 1.0, 0.1, 0.5, 0.02
    f = 10.0 if action == 1 else -10.0
    tmp = (f + mp * l * thd * thd * math.sin(th)) / (mc + mp)
    thacc = (g * math.sin(th) - math.cos(th) * tmp) / (l * (4 / 3 - mp * math.cos(th) ** 2 / (mc + mp)))
    xacc = tmp - mp * l * thacc * math.cos(th) / (mc + mp)
    return [x + tau * xd, xd + tau * xacc, th + tau * thd, thd + tau * thacc]


@pytest.mark.parametrize("env_id", ENV_IDS)
def test_reset_is_deterministic_per_seed(env_id):
    a, b = make_env(env_id), make_env(env_id)
    assert np.array_equal(a.reset(seed=5), b.reset(seed=5))


def test_cartpole_initial_state_range():
    env = CartPole()
    for seed in range(200):
        s = env.reset(seed=seed)
        assert s.shape == (4,) and np.all(np.abs(s) <= 0.05)


def test_cartpole_matches_equations_of_motion():
    env = CartPole()
    env.reset(seed=0)
    rng = np.random.default_rng(0)
    for _ in range(30):
        before = env.state.copy()
        a = int(rng.integers(2))
        tr = env.step(a)
        assert np.allclose(tr.next_state, cartpole_oracle(before, a), rtol=0, atol=1e-15)
        if tr.done:
            break


def test_cartpole_angle_beyond_threshold_ends_episode_with_reward():
    env = CartPole()
    env.reset(seed=0)
    env.state = np.array([0.0, 0.0, 0.2, 1.0])
    tr = env.step(1)
    assert tr.done and not tr.truncated and tr.reward == 1.0
    with pytest.raises(EnvFault):
        env.step(0)


def test_cartpole_truncates_at_cap():
    env = CartPole(max_episode_steps=3)
    env.reset(seed=1)
    flags = [env.step(i % 2) for i in range(3)]
    assert [t.truncated for t in flags] == [False, False, True]
    assert not any(t.done for t in flags)


def test_step_before_reset_faults():
    with pytest.raises(EnvFault):
        CartPole().step(0)


def test_action_space_checks():
    env = CartPole()
    env.reset(seed=0)
    with pytest.raises(ActionSpaceError):
        env.step(2)
    pm = PointMass()
    pm.reset(seed=0)
    with pytest.raises(ActionSpaceError):
        pm.step([0.0, 1.5])
    with pytest.raises(ActionSpaceError):
        pm.step([0.0])


def test_point_mass_zero_action():
    env = PointMass()
    env.reset(seed=3)
    env.vel = np.array([0.4, -0.2])
    pos, goal = env.pos.copy(), env.goal.copy()
    tr = env.step(np.zeros(2))
    vel = 0.95 * np.array([0.4, -0.2])
    assert np.allclose(env.pos, pos + 0.1 * vel, atol=1e-15)
    assert tr.reward == pytest.approx(-np.sum((env.pos - goal) ** 2), abs=1e-15)


def test_grid_mdp_point_start_and_transition_frequencies():
    env = GridMdpEnv(max_episode_steps=10**6)
    assert all(np.argmax(env.reset(seed=s)) == 0 for s in range(20))
    env.reset(seed=0)
    n = 100_000
    counts = np.zeros(env.mdp.num_states)
    for _ in range(n):
        env.s = 2
        env.step(1)
        counts[env.s] += 1
    assert np.max(np.abs(counts / n - env.mdp.P[2, 1])) <= 0.01


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), env_id=st.sampled_from(ENV_IDS))
def test_same_seed_and_actions_give_identical_trajectories(seed, env_id):
    rng = np.random.default_rng(seed)
    e = make_env(env_id)
    if e.spec.discrete:
        actions = rng.integers(e.spec.action_space.n, size=40).tolist()
    else:
        actions = list(rng.uniform(-1, 1, (40, e.spec.action_dim)))

    def run():
        env = make_env(env_id)
        out = [env.reset(seed=seed)]
        for a in actions:
            tr = env.step(a)
            out += [tr.next_state, np.array([tr.reward])]
            if tr.done or tr.truncated:
                break
        return out

    assert all(np.array_equal(a, b) for a, b in zip(run(), run()))


def test_unknown_env_id():
    with pytest.raises(ConfigError):
        make_env("pong")


# ---- tabular ------------------------------------------------------------------

def test_single_state_visitation():
    mdp = tabular.TabularMdp(np.ones((1, 2, 1)), np.zeros((1, 2)), 0.9, np.ones(1))
    assert tabular.exact_visitation(mdp, np.array([[0.5, 0.5]])).tolist() == pytest.approx([1.0])


def test_two_state_cycle_visitation():
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = P[1, 0, 0] = 1.0
    mdp = tabular.TabularMdp(P, np.zeros((2, 1)), 0.5, np.array([1.0, 0.0]))
    rho = tabular.exact_visitation(mdp, np.ones((2, 1)))
    assert rho == pytest.approx([2 / 3, 1 / 3], abs=1e-15)
    # power-iteration cross-check of the discounted occupancy
    d, acc = np.array([1.0, 0.0]), np.zeros(2)
    for t in range(200):
        acc += (1 - 0.5) * 0.5**t * d
        d = d @ P[:, 0, :]
    assert rho == pytest.approx(acc, abs=1e-14)


def test_visitation_sums_to_one_and_solves_the_system():
    rng = np.random.default_rng(0)
    for seed in range(20):
        mdp = tabular.random_tabular_mdp(seed=seed, point_start=bool(seed % 2))
        pi = tabular.random_policy(mdp.num_states, mdp.num_actions, rng)
        rho = tabular.exact_visitation(mdp, pi)
        M = tabular.state_transitions(mdp, pi)
        assert abs(rho.sum() - 1) <= 1e-12
        assert np.max(np.abs(rho - (1 - mdp.gamma) * mdp.rho0 - mdp.gamma * M.T @ rho)) < 1e-10


def test_q_v_advantage_examples():
    mdp = tabular.TabularMdp(np.ones((1, 1, 1)), np.ones((1, 1)), 0.9, np.ones(1))
    Q, V, A = tabular.exact_q_v_advantage(mdp, np.ones((1, 1)))
    assert Q[0, 0] == pytest.approx(10.0) and V[0] == pytest.approx(10.0) and A[0, 0] == pytest.approx(0.0)
    zero = tabular.random_tabular_mdp(seed=1)
    zero.rewards[:] = 0.0
    Q, V, A = tabular.exact_q_v_advantage(zero, np.full((8, 3), 1 / 3))
    assert not Q.any() and not V.any() and not A.any()


def test_advantage_has_zero_policy_mean():
    mdp = tabular.random_tabular_mdp(seed=2)
    pi = tabular.random_policy(8, 3, np.random.default_rng(2))
    _, _, A = tabular.exact_q_v_advantage(mdp, pi)
    assert np.max(np.abs(np.sum(pi * A, axis=1))) <= 1e-10


def test_q_values_match_monte_carlo():
    mdp = tabular.random_tabular_mdp(seed=3, num_states=4, num_actions=3, gamma=0.5)
    pi = tabular.random_policy(4, 3, np.random.default_rng(3))
    Q, _, _ = tabular.exact_q_v_advantage(mdp, pi)
    rng = np.random.default_rng(4)
    s0, a0, n, horizon = 1, 2, 10_000, 40
    returns = np.empty(n)
    for i in range(n):
        s, a, total = s0, a0, 0.0
        for t in range(horizon):
            total += mdp.gamma**t * mdp.rewards[s, a]
            s = rng.choice(4, p=mdp.P[s, a])
            a = rng.choice(3, p=pi[s])
        returns[i] = total
    se = returns.std() / math.sqrt(n)
    assert abs(returns.mean() - Q[s0, a0]) <= 3 * se + 0.5**horizon * 10


def test_performance_difference_examples():
    rng = np.random.default_rng(5)
    mdp = tabular.random_tabular_mdp(seed=5)
    pi = tabular.random_policy(8, 3, rng)
    assert tabular.performance_difference_check(mdp, pi, pi) == pytest.approx((0.0, 0.0), abs=1e-13)
    for _ in range(20):
        a, b = tabular.random_policy(8, 3, rng), tabular.random_policy(8, 3, rng)
        lhs, rhs = tabular.performance_difference_check(mdp, a, b)
        assert abs(lhs - rhs) < 1e-8
    Q, _, _ = tabular.exact_q_v_advantage(mdp, pi)
    lhs, rhs = tabular.performance_difference_check(mdp, pi, tabular.greedy_policy(Q))
    assert lhs >= 0 and abs(lhs - rhs) < 1e-8


def test_mdp_validation():
    with pytest.raises(ConfigError):
        tabular.TabularMdp(np.full((2, 1, 2), 0.6), np.zeros((2, 1)), 0.9, np.array([1.0, 0.0]))
    with pytest.raises(ConfigError):
        tabular.TabularMdp(np.full((2, 1, 2), 0.5), np.zeros((2, 1)), 1.0, np.array([1.0, 0.0]))
