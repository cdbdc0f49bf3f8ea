"""Actor-critic training loop: collect, estimate advantages, update, log.

Policy and value networks are separate; one Adam state each. The learning
rate decays linearly to zero over ``total_steps`` when ``lr_decay`` is set.
"""
from __future__ import annotations

import csv
import json
import math
import time
from collections import deque
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import grad, policy as pol
from .config import TrainConfig, dump_config
from .envs import Box, Env, EnvSpec, make_env
from .errors import EnvFault, NonFiniteLossError, ShapeError, SpoLabError
from .gae import RolloutBatch, compute_gae, compute_returns
from .objectives import LossBreakdown, ObjectiveKind, normalize_advantages, policy_loss_grad

RETURN_WINDOW = 20
CHECKPOINT_FORMAT = "spo-lab-checkpoint/1"


@dataclass
class Agent:
    spec: EnvSpec
    policy: grad.MlpParams
    value: grad.MlpParams
    log_std: np.ndarray | None = None

    def dist(self, states) -> pol.PolicyDistribution:
        out = grad.forward(self.policy, states)
        if self.spec.discrete:
            return pol.categorical(out)
        return pol.gaussian(out, np.broadcast_to(self.log_std, out.shape))

    def values(self, states) -> np.ndarray:
        return grad.forward(self.value, states)[..., 0]

    def greedy_action(self, state):
        d = self.dist(state)
        a = pol.mode(d)
        if isinstance(self.spec.action_space, Box):
            a = np.clip(a, self.spec.action_space.low, self.spec.action_space.high)
        return a

    def copy(self) -> "Agent":
        return Agent(self.spec, self.policy.copy(), self.value.copy(),
                     None if self.log_std is None else self.log_std.copy())


def init_agent(spec: EnvSpec, hidden_sizes, rng: np.random.Generator) -> Agent:
    hidden = [int(h) for h in hidden_sizes]
    policy_net = grad.init_mlp([spec.observation_dim, *hidden, spec.action_dim], rng, output_gain=0.01)
    value_net = grad.init_mlp([spec.observation_dim, *hidden, 1], rng, output_gain=1.0)
    log_std = None if spec.discrete else np.zeros(spec.action_dim)
    return Agent(spec, policy_net, value_net, log_std)


@dataclass
class MetricsRecord:
    global_step: int
    mean_episode_return: float
    policy_loss: float
    value_loss: float
    entropy: float
    mean_ratio_deviation: float
    max_ratio_deviation_so_far: float
    clip_fraction: float
    learning_rate: float
    wall_time: float


# wall_time is not reproducible, so it lives in timing.csv instead
METRICS_COLUMNS = [f.name for f in fields(MetricsRecord) if f.name != "wall_time"]


class RolloutWorkers:
    """``N`` environments, each with its own RNG stream derived from (seed, worker)."""

    def __init__(self, env_id: str, num_workers: int, seed: int):
        streams = np.random.SeedSequence(seed).spawn(num_workers)
        self.envs: list[Env] = [make_env(env_id) for _ in range(num_workers)]
        self.rngs = [np.random.default_rng(s) for s in streams]
        self.obs = np.stack([
            env.reset(seed=int(rng.integers(2**31 - 1))) for env, rng in zip(self.envs, self.rngs)
        ])
        self.running_returns = np.zeros(num_workers)
        self.finished_returns: list[float] = []

    @property
    def spec(self) -> EnvSpec:
        return self.envs[0].spec


def _sample_actions(dist: pol.PolicyDistribution, rngs) -> np.ndarray:
    if dist.is_categorical:
        u = np.array([rng.random() for rng in rngs])
        cdf = np.cumsum(pol.probs(dist), axis=-1)
        return np.minimum((cdf <= u[:, None]).sum(axis=-1), cdf.shape[-1] - 1)
    z = np.stack([rng.standard_normal(dist.mean.shape[-1]) for rng in rngs])
    return dist.mean + np.exp(dist.log_std) * z


def collect_rollouts(agent: Agent, workers: RolloutWorkers, horizon: int) -> RolloutBatch:
    """Run every worker for ``horizon`` steps with the current policy.

    Log-probabilities are of the raw (unclipped) Gaussian sample; the env
    receives the sample clipped to its bounds.
    """
    N = len(workers.envs)
    spec = workers.spec
    states = np.zeros((horizon, N, spec.observation_dim))
    actions = np.zeros((horizon, N), dtype=np.int64) if spec.discrete else np.zeros((horizon, N, spec.action_dim))
    rewards = np.zeros((horizon, N))
    dones = np.zeros((horizon, N))
    values = np.zeros((horizon, N))
    log_probs = np.zeros((horizon, N))
    for t in range(horizon):
        obs = workers.obs
        dist = agent.dist(obs)
        act = _sample_actions(dist, workers.rngs)
        states[t] = obs
        actions[t] = act
        values[t] = agent.values(obs)
        log_probs[t] = pol.log_prob(dist, act)
        next_obs = np.empty_like(obs)
        for i, env in enumerate(workers.envs):
            a = act[i]
            if not spec.discrete:
                a = np.clip(a, spec.action_space.low, spec.action_space.high)
            try:
                tr = env.step(a)
            except SpoLabError as exc:
                raise EnvFault(f"worker {i} failed at rollout step {t}: {exc}") from exc
            rewards[t, i] = tr.reward
            workers.running_returns[i] += tr.reward
            if tr.done or tr.truncated:
                dones[t, i] = 1.0
                workers.finished_returns.append(float(workers.running_returns[i]))
                workers.running_returns[i] = 0.0
                next_obs[i] = env.reset()
            else:
                next_obs[i] = tr.next_state
        workers.obs = next_obs
    bootstrap = agent.values(workers.obs)
    return RolloutBatch(states, actions, rewards, dones, values, log_probs, bootstrap)


@dataclass
class Optimizers:
    policy: grad.AdamState
    value: grad.AdamState
    log_std: grad.AdamState | None = None

    @classmethod
    def for_agent(cls, agent: Agent) -> "Optimizers":
        return cls(
            grad.AdamState.for_params(agent.policy),
            grad.AdamState.for_params(agent.value),
            None if agent.log_std is None else grad.AdamState.for_arrays([agent.log_std]),
        )


@dataclass
class MinibatchGrads:
    policy: grad.GradBuffer
    value: grad.GradBuffer
    log_std: np.ndarray | None
    breakdown: LossBreakdown
    approx_kl: float


def minibatch_gradients(agent: Agent, mb: dict, kind: ObjectiveKind, eps: float, c1: float, c2: float) -> MinibatchGrads:
    """Loss breakdown and parameter gradients of L = L_p + c1 L_v - c2 L_e."""
    states, actions = mb["states"], mb["actions"]
    M = states.shape[0]
    adv = mb["advantages"]
    dist = agent.dist(states)
    new_lp = pol.log_prob(dist, actions)
    ratios = pol.ratio(new_lp, mb["log_probs"])
    ent = pol.entropy(dist)
    values = agent.values(states)
    breakdown = LossBreakdown.evaluate(
        ratios, adv, values, mb["returns"], float(np.mean(ent)), kind, eps, c1, c2
    )
    # chain rule: dL/dlogp = dL/dr * r
    dlogp = policy_loss_grad(ratios, adv, kind, eps) * ratios
    log_std_grad = None
    if dist.is_categorical:
        out_grad = dlogp[:, None] * pol.log_prob_grad_logits(dist, actions)
        out_grad -= (c2 / M) * pol.entropy_grad_logits(dist)
    else:
        d_mean, d_log_std = pol.log_prob_grad_gaussian(dist, actions)
        out_grad = dlogp[:, None] * d_mean
        # mean entropy has slope 1 in every log_std entry
        log_std_grad = (dlogp[:, None] * d_log_std).sum(axis=0) - c2
    policy_grads = grad.backward(agent.policy, states, out_grad)
    value_out = (c1 / M) * (values - mb["returns"])
    value_grads = grad.backward(agent.value, states, value_out[:, None])
    log_r = new_lp - mb["log_probs"]
    approx_kl = float(np.mean((ratios - 1.0) - log_r))
    return MinibatchGrads(policy_grads, value_grads, log_std_grad, breakdown, approx_kl)


def _clip_global_norm(arrays, max_norm: float) -> None:
    total = math.sqrt(sum(float(np.sum(a * a)) for a in arrays))
    if total > max_norm:
        for a in arrays:
            a *= max_norm / (total + 1e-12)


def _mean_breakdown(items: list[LossBreakdown], c1: float, c2: float) -> LossBreakdown:
    lp = float(np.mean([b.policy_loss for b in items]))
    lv = float(np.mean([b.value_loss for b in items]))
    ent = float(np.mean([b.entropy for b in items]))
    return LossBreakdown(
        policy_loss=lp,
        value_loss=lv,
        entropy=ent,
        total=lp + c1 * lv - c2 * ent,
        mean_ratio_deviation=float(np.mean([b.mean_ratio_deviation for b in items])),
        clip_fraction=float(np.mean([b.clip_fraction for b in items])),
    )


def update(
    agent: Agent,
    batch: RolloutBatch,
    config: TrainConfig,
    opt: Optimizers,
    lr: float,
    rng: np.random.Generator,
) -> tuple[list[LossBreakdown], float]:
    """All epochs of mini-batch updates on one collected batch.

    Returns one averaged breakdown per completed epoch and the learning rate
    after any adaptive adjustment. Old log-probs are read from ``batch`` and
    never recomputed.
    """
    data = batch.flat()
    if config.advantage_norm:
        data["advantages"] = normalize_advantages(data["advantages"])
    n = data["advantages"].size
    mb_size = n // config.num_minibatches
    kind = ObjectiveKind.parse(config.objective)
    epochs = []
    for epoch in range(config.update_epochs):
        order = rng.permutation(n)
        parts, kls = [], []
        for j in range(config.num_minibatches):
            idx = order[j * mb_size:(j + 1) * mb_size]
            mb = {k: v[idx] for k, v in data.items()}
            g = minibatch_gradients(agent, mb, kind, config.eps, config.c1, config.c2)
            if not math.isfinite(g.breakdown.total):
                raise NonFiniteLossError(j, epoch, g.breakdown.total)
            parts.append(g.breakdown)
            kls.append(g.approx_kl)
            if config.max_grad_norm > 0:
                extra = [] if g.log_std is None else [g.log_std]
                _clip_global_norm(g.policy.arrays() + g.value.arrays() + extra, config.max_grad_norm)
            grad.adam_step(agent.policy, g.policy, opt.policy, lr)
            grad.adam_step(agent.value, g.value, opt.value, lr)
            if agent.log_std is not None:
                grad.adam_update([agent.log_std], [g.log_std], opt.log_std, lr)
                np.clip(agent.log_std, pol.LOG_STD_MIN, pol.LOG_STD_MAX, out=agent.log_std)
        epochs.append(_mean_breakdown(parts, config.c1, config.c2))
        if config.target_kl > 0:
            kl = float(np.mean(kls))
            if config.adaptive_lr:
                if kl > 2.0 * config.target_kl:
                    lr = max(lr / 1.5, 1e-6)
                elif kl < 0.5 * config.target_kl:
                    lr = min(lr * 1.5, 1e-2)
            elif kl > config.target_kl:
                break
    return epochs, lr


def batch_ratios(agent: Agent, batch: RolloutBatch) -> np.ndarray:
    data = batch.flat()
    new_lp = pol.log_prob(agent.dist(data["states"]), data["actions"])
    return pol.ratio(new_lp, data["log_probs"])


def lr_at(config: TrainConfig, global_step: int) -> float:
    if not config.lr_decay or config.total_steps <= 0:
        return config.learning_rate
    return config.learning_rate * max(0.0, 1.0 - global_step / config.total_steps)


class Trainer:
    def __init__(self, config: TrainConfig):
        self.config = config.resolved()
        seed_seq = np.random.SeedSequence(self.config.seed)
        init_seq, worker_seq, update_seq = seed_seq.spawn(3)
        self.workers = RolloutWorkers(self.config.env_id, self.config.num_workers, int(worker_seq.generate_state(1)[0]))
        self.agent = init_agent(self.workers.spec, self.config.hidden_sizes, np.random.default_rng(init_seq))
        self.opt = Optimizers.for_agent(self.agent)
        self.update_rng = np.random.default_rng(update_seq)
        self.global_step = 0
        self.phase = 0
        self.adaptive_lr_value = self.config.learning_rate
        self.max_ratio_dev = 0.0
        self.recent_returns: deque[float] = deque(maxlen=RETURN_WINDOW)
        self.records: list[MetricsRecord] = []
        self._t0 = time.perf_counter()

    def current_lr(self) -> float:
        if self.config.adaptive_lr:
            return self.adaptive_lr_value
        return lr_at(self.config, self.global_step)

    def run_phase(self) -> MetricsRecord:
        cfg = self.config
        lr = self.current_lr()
        n_done = len(self.workers.finished_returns)
        batch = collect_rollouts(self.agent, self.workers, cfg.horizon)
        self.recent_returns.extend(self.workers.finished_returns[n_done:])
        compute_gae(batch, cfg.gamma, cfg.gae_lambda)
        compute_returns(batch)
        epochs, new_lr = update(self.agent, batch, cfg, self.opt, lr, self.update_rng)
        if cfg.adaptive_lr:
            self.adaptive_lr_value = new_lr
        dev = float(np.mean(np.abs(batch_ratios(self.agent, batch) - 1.0)))
        self.max_ratio_dev = max(self.max_ratio_dev, dev)
        self.global_step += batch.rewards.size
        self.phase += 1
        last = epochs[-1]
        rec = MetricsRecord(
            global_step=self.global_step,
            mean_episode_return=float(np.mean(self.recent_returns)) if self.recent_returns else math.nan,
            policy_loss=last.policy_loss,
            value_loss=last.value_loss,
            entropy=last.entropy,
            mean_ratio_deviation=dev,
            max_ratio_deviation_so_far=self.max_ratio_dev,
            clip_fraction=last.clip_fraction,
            learning_rate=lr,
            wall_time=time.perf_counter() - self._t0,
        )
        self.records.append(rec)
        return rec

    def checkpoint(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "config": self.config.to_dict(),
            "global_step": self.global_step,
            "policy": grad.checkpoint_dict(self.agent.policy, self.opt.policy),
            "value": grad.checkpoint_dict(self.agent.value, self.opt.value),
            "log_std": None if self.agent.log_std is None else self.agent.log_std.tolist(),
            "log_std_adam": None if self.opt.log_std is None else grad.adam_to_dict(self.opt.log_std),
        }

    def save_checkpoint(self, path) -> None:
        Path(path).write_text(json.dumps(self.checkpoint()))


def write_metrics(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for rec in records:
            d = asdict(rec)
            w.writerow([str(int(d[c])) if c == "global_step" else repr(float(d[c])) for c in METRICS_COLUMNS])


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return []
    missing = set(METRICS_COLUMNS) - set(rows[0])
    if missing:
        raise ShapeError(f"{path}: metrics file lacks columns {sorted(missing)}")
    return [{k: (int(v) if k == "global_step" else float(v)) for k, v in r.items()} for r in rows]


@dataclass
class TrainResult:
    records: list[MetricsRecord]
    checkpoint: dict
    out_dir: Path | None


def train(config: TrainConfig, out_dir=None, log=None) -> TrainResult:
    """Run until ``total_steps`` environment steps are consumed.

    With ``out_dir`` set, writes ``metrics.csv``, ``timing.csv``,
    ``checkpoint.json`` (every ``checkpoint_every`` phases and at the end) and
    ``resolved.toml``.
    """
    trainer = Trainer(config)
    cfg = trainer.config
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        dump_config(cfg, out / "resolved.toml")
    for phase in range(cfg.num_phases):
        rec = trainer.run_phase()
        if log is not None:
            log(rec)
        if out is not None and (phase + 1) % cfg.checkpoint_every == 0:
            trainer.save_checkpoint(out / "checkpoint.json")
    if out is not None:
        trainer.save_checkpoint(out / "checkpoint.json")
        write_metrics(trainer.records, out / "metrics.csv")
        with open(out / "timing.csv", "w") as fh:
            fh.write("global_step,wall_time\n")
            for rec in trainer.records:
                fh.write(f"{rec.global_step},{rec.wall_time:.6f}\n")
    return TrainResult(trainer.records, trainer.checkpoint(), out)


def load_agent(checkpoint) -> tuple[Agent, TrainConfig]:
    """Rebuild the agent from a checkpoint dict or a path to one."""
    if not isinstance(checkpoint, dict):
        checkpoint = json.loads(Path(checkpoint).read_text())
    cfg = TrainConfig.from_dict(checkpoint["config"]).resolved()
    spec = make_env(cfg.env_id).spec
    policy_net = grad.params_from_dict(checkpoint["policy"])
    value_net = grad.params_from_dict(checkpoint["value"])
    if policy_net.layer_sizes[0] != spec.observation_dim or policy_net.layer_sizes[-1] != spec.action_dim:
        raise ShapeError(f"checkpoint network {policy_net.layer_sizes} does not fit env {cfg.env_id}")
    log_std = checkpoint.get("log_std")
    if not spec.discrete and log_std is None:
        raise ShapeError("continuous-action checkpoint lacks log_std")
    return Agent(spec, policy_net, value_net, None if log_std is None else np.array(log_std)), cfg


def evaluate(agent: Agent, env_id: str, episodes: int, seed: int = 0) -> np.ndarray:
    """Undiscounted returns of the greedy policy over ``episodes`` episodes."""
    env = make_env(env_id)
    if env.spec != agent.spec:
        raise ShapeError(f"agent built for {agent.spec}, env {env_id} is {env.spec}")
    seeds = np.random.SeedSequence(seed).generate_state(max(episodes, 1))
    returns = np.zeros(episodes)
    for ep in range(episodes):
        obs = env.reset(seed=int(seeds[ep]))
        total = 0.0
        while True:
            tr = env.step(agent.greedy_action(obs))
            total += tr.reward
            obs = tr.next_state
            if tr.done or tr.truncated:
                break
        returns[ep] = total
    return returns
