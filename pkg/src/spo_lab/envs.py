"""Seedable toy environments: cart-pole, a 2-D point-mass reacher and a
sampled tabular MDP."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ActionSpaceError, ConfigError, EnvFault
from .tabular import TabularMdp, random_tabular_mdp


@dataclass(frozen=True)
class Discrete:
    n: int


@dataclass(frozen=True)
class Box:
    dim: int
    low: float
    high: float


@dataclass(frozen=True)
class EnvSpec:
    observation_dim: int
    action_space: Discrete | Box
    max_episode_steps: int

    def __post_init__(self):
        if self.observation_dim < 1 or self.max_episode_steps < 1:
            raise ConfigError("dimensions must be positive")
        if isinstance(self.action_space, Box) and not self.action_space.low < self.action_space.high:
            raise ConfigError("action low must be below high")

    @property
    def discrete(self) -> bool:
        return isinstance(self.action_space, Discrete)

    @property
    def action_dim(self) -> int:
        return self.action_space.n if self.discrete else self.action_space.dim


@dataclass
class Transition:
    state: np.ndarray
    action: int | np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool
    truncated: bool


class Env:
    spec: EnvSpec

    def __init__(self):
        self.rng = np.random.default_rng()
        self.t = 0
        self._needs_reset = True

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.t = 0
        self._needs_reset = False
        return self._reset()

    def step(self, action) -> Transition:
        if self._needs_reset:
            raise EnvFault("step() called before reset() or after the episode ended")
        action = self._check_action(action)
        state = self.observation()
        reward, done = self._step(action)
        self.t += 1
        truncated = (not done) and self.t >= self.spec.max_episode_steps
        self._needs_reset = done or truncated
        return Transition(state, action, float(reward), self.observation(), bool(done), bool(truncated))

    def _check_action(self, action):
        space = self.spec.action_space
        if isinstance(space, Discrete):
            if isinstance(action, np.ndarray):
                action = action.item()
            if isinstance(action, float) and action.is_integer():
                action = int(action)
            if not isinstance(action, (int, np.integer)) or not 0 <= action < space.n:
                raise ActionSpaceError(f"action {action!r} not in Discrete({space.n})")
            return int(action)
        a = np.asarray(action, dtype=np.float64)
        if a.shape != (space.dim,) or not np.all(np.isfinite(a)):
            raise ActionSpaceError(f"action {action!r} not a finite vector of length {space.dim}")
        if np.any(a < space.low) or np.any(a > space.high):
            raise ActionSpaceError(f"action {a} outside [{space.low}, {space.high}]")
        return a

    def observation(self) -> np.ndarray:
        raise NotImplementedError

    def _reset(self) -> np.ndarray:
        raise NotImplementedError

    def _step(self, action) -> tuple[float, bool]:
        raise NotImplementedError


class CartPole(Env):
    """Classic cart-pole balancing (Euler integration, 500-step cap)."""

    gravity = 9.8
    mass_cart = 1.0
    mass_pole = 0.1
    length = 0.5  # half the pole length
    force_mag = 10.0
    tau = 0.02
    theta_threshold = 12 * 2 * math.pi / 360
    x_threshold = 2.4

    def __init__(self, max_episode_steps: int = 500):
        super().__init__()
        self.spec = EnvSpec(4, Discrete(2), max_episode_steps)
        self.state = np.zeros(4)

    def observation(self) -> np.ndarray:
        return self.state.copy()

    def _reset(self):
        self.state = self.rng.uniform(-0.05, 0.05, size=4)
        return self.observation()

    def _step(self, action):
        x, x_dot, theta, theta_dot = self.state
        force = self.force_mag if action == 1 else -self.force_mag
        cos, sin = math.cos(theta), math.sin(theta)
        total_mass = self.mass_cart + self.mass_pole
        pole_ml = self.mass_pole * self.length
        temp = (force + pole_ml * theta_dot**2 * sin) / total_mass
        theta_acc = (self.gravity * sin - cos * temp) / (
            self.length * (4.0 / 3.0 - self.mass_pole * cos**2 / total_mass)
        )
        x_acc = temp - pole_ml * theta_acc * cos / total_mass
        x = x + self.tau * x_dot
        x_dot = x_dot + self.tau * x_acc
        theta = theta + self.tau * theta_dot
        theta_dot = theta_dot + self.tau * theta_acc
        self.state = np.array([x, x_dot, theta, theta_dot])
        done = abs(x) > self.x_threshold or abs(theta) > self.theta_threshold
        return 1.0, done


class PointMass(Env):
    """2-D damped double integrator steered towards a random goal.

    Observation is ``[pos, vel, goal]``; reward is ``-|pos - goal|^2`` after
    the move. There is no terminal state, only the 200-step cap.
    """

    damping = 0.95
    dt = 0.1

    def __init__(self, max_episode_steps: int = 200):
        super().__init__()
        self.spec = EnvSpec(6, Box(2, -1.0, 1.0), max_episode_steps)
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        self.goal = np.zeros(2)

    def observation(self):
        return np.concatenate([self.pos, self.vel, self.goal])

    def _reset(self):
        self.pos = self.rng.uniform(-1.0, 1.0, size=2)
        self.vel = np.zeros(2)
        self.goal = self.rng.uniform(-1.0, 1.0, size=2)
        return self.observation()

    def _step(self, action):
        self.vel = self.damping * self.vel + self.dt * action
        self.pos = self.pos + self.dt * self.vel
        return -float(np.sum((self.pos - self.goal) ** 2)), False


class GridMdpEnv(Env):
    """Samples a :class:`TabularMdp`; observations are one-hot states."""

    def __init__(self, mdp: TabularMdp | None = None, max_episode_steps: int = 100):
        super().__init__()
        self.mdp = mdp if mdp is not None else random_tabular_mdp(seed=0)
        self.spec = EnvSpec(self.mdp.num_states, Discrete(self.mdp.num_actions), max_episode_steps)
        self.s = 0

    def observation(self):
        obs = np.zeros(self.mdp.num_states)
        obs[self.s] = 1.0
        return obs

    def _reset(self):
        self.s = int(self.rng.choice(self.mdp.num_states, p=self.mdp.rho0))
        return self.observation()

    def _step(self, action):
        reward = self.mdp.rewards[self.s, action]
        self.s = int(self.rng.choice(self.mdp.num_states, p=self.mdp.P[self.s, action]))
        return reward, False


ENV_IDS = ("cartpole", "pointmass", "gridmdp")


def make_env(env_id: str, **kwargs) -> Env:
    factories = {"cartpole": CartPole, "pointmass": PointMass, "gridmdp": GridMdpEnv}
    try:
        return factories[env_id](**kwargs)
    except KeyError:
        raise ConfigError(f"unknown env_id {env_id!r}; expected one of {ENV_IDS}") from None
