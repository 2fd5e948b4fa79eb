"""Adversarial imitation: f-VIM over (s, a) pairs and f-VIMO over (s, s') pairs.

Each iteration collects on-policy rollouts through a reward-free view of the
environment, trains the discriminator for a few epochs, relabels the rollout
with discriminator rewards and runs a policy-gradient update.  The true task
reward is only ever read by :func:`~fvim.policy_opt.evaluate_policy` for
logging.  GAIL and GAIFO are the ``gan`` + ``original`` configuration.
"""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import adversary as adv
from . import diffmath as dm
from .adversary import LossVariant, PairMode, RegConfig
from .envsim import EnvSpec, RewardFreeEnv, clip_action, make_env, reset_batch, _dynamics
from .errors import ModeError, StabilityError
from .fdiv import DivergenceKind
from .policy_opt import (
    GaussianPolicy,
    PPOConfig,
    collect_rollout,
    compute_gae,
    evaluate_policy,
    fill_values,
    make_policy,
    make_value_function,
    ppo_update,
    sample_action,
)

log = logging.getLogger(__name__)

CURVE_COLUMNS = (
    "iteration",
    "env_steps",
    "mean_true_return",
    "std_true_return",
    "disc_objective",
    "penalty",
    "mean_adv_reward",
    "grad_norm_raw",
    "grad_norm_applied",
    "stability_event",
)
NO_EVENT = "none"


def derive_seed(base: int, *tags) -> int:
    """A 32-bit seed determined by ``base`` and a sequence of labels."""
    key = [int(base) & 0xFFFFFFFF] + [zlib.crc32(str(t).encode()) for t in tags]
    return int(np.random.SeedSequence(key).generate_state(1)[0])


# --- demonstrations ----------------------------------------------------------


@dataclass
class Trajectory:
    states: np.ndarray
    actions: np.ndarray | None = None

    def __len__(self):
        return self.states.shape[0]


@dataclass
class DemoDataset:
    env_id: str
    mode: PairMode
    trajectories: list
    source_seed: int

    def __post_init__(self):
        self.mode = PairMode(self.mode)
        for traj in self.trajectories:
            has_actions = traj.actions is not None
            if has_actions != (self.mode is PairMode.STATE_ACTION):
                raise ModeError(f"{self.mode.value} dataset with inconsistent action storage")

    def __len__(self):
        return len(self.trajectories)

    @property
    def obs_dim(self) -> int:
        return self.trajectories[0].states.shape[1]

    @property
    def act_dim(self) -> int:
        if self.mode is PairMode.STATE_ACTION:
            return self.trajectories[0].actions.shape[1]
        return make_env(self.env_id).act_dim

    def pairs(self) -> np.ndarray:
        """All ``(s, a)`` or ``(s, s')`` rows, trajectory by trajectory."""
        if self.mode is PairMode.STATE_ACTION:
            rows = [np.concatenate([t.states, t.actions], axis=1) for t in self.trajectories]
        else:
            rows = [np.concatenate([t.states[:-1], t.states[1:]], axis=1) for t in self.trajectories]
        return np.concatenate(rows, axis=0)


def generate_demos(expert: GaussianPolicy, spec: EnvSpec, n_trajectories: int, seed: int) -> DemoDataset:
    """Stochastic expert rollouts over full horizons, stored as (s, a)."""
    if n_trajectories < 1:
        raise ValueError("n_trajectories must be at least 1")
    rng = np.random.default_rng(seed)
    states = reset_batch(spec, rng, n_trajectories)
    s_buf = np.empty((n_trajectories, spec.horizon, spec.obs_dim))
    a_buf = np.empty((n_trajectories, spec.horizon, spec.act_dim))
    for t in range(spec.horizon):
        actions, _ = sample_action(expert, states, rng)
        actions = clip_action(spec, actions)
        s_buf[:, t], a_buf[:, t] = states, actions
        states, _ = _dynamics(spec, states, actions)
    trajs = [Trajectory(s_buf[i].copy(), a_buf[i].copy()) for i in range(n_trajectories)]
    return DemoDataset(spec.env_id, PairMode.STATE_ACTION, trajs, int(seed))


def demo_returns(demos: DemoDataset) -> np.ndarray:
    """True returns of stored (s, a) trajectories, replayed through the dynamics."""
    if demos.mode is not PairMode.STATE_ACTION:
        raise ModeError("returns need the stored actions")
    spec = make_env(demos.env_id)
    out = []
    for traj in demos.trajectories:
        _, reward = _dynamics(spec, traj.states, traj.actions)
        out.append(float(np.sum(reward)))
    return np.array(out)


def strip_actions(demos: DemoDataset) -> DemoDataset:
    """Observation-only copy of a state-action dataset."""
    if demos.mode is not PairMode.STATE_ACTION:
        raise ModeError("dataset is already observation-only")
    trajs = [Trajectory(t.states.copy(), None) for t in demos.trajectories]
    return DemoDataset(demos.env_id, PairMode.STATE_TRANSITION, trajs, demos.source_seed)


def subsample(demos: DemoDataset, k: int, seed: int) -> DemoDataset:
    """``k`` whole trajectories drawn without replacement, kept in original order."""
    n = len(demos)
    if not 1 <= k <= n:
        raise ValueError(f"cannot subsample {k} of {n} trajectories")
    chosen = np.sort(np.random.default_rng(seed).choice(n, size=k, replace=False))
    return replace(demos, trajectories=[demos.trajectories[i] for i in chosen])


# --- training ----------------------------------------------------------------


@dataclass
class TrainerConfig:
    kind: DivergenceKind = DivergenceKind.GAN
    variant: LossVariant = LossVariant.REPARAMETERIZED
    reg: RegConfig = field(default_factory=lambda: RegConfig(psi=0.0))
    ppo: PPOConfig = field(default_factory=PPOConfig)
    n_iterations: int = 50
    steps_per_iteration: int = 4000
    disc_epochs: int = 10
    disc_lr: float = 1e-3
    disc_minibatch: int = 256
    n_demos: int = 20
    seed: int = 0
    hidden: tuple = (64, 64)
    eval_episodes: int = 10
    final_eval_episodes: int = 100

    def __post_init__(self):
        self.kind = DivergenceKind.parse(self.kind)
        self.variant = LossVariant.parse(self.variant)
        for name in ("steps_per_iteration", "disc_epochs", "disc_minibatch", "n_demos", "eval_episodes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_iterations < 0:
            raise ValueError("n_iterations must be non-negative")
        if self.disc_lr <= 0:
            raise ValueError("disc_lr must be positive")


@dataclass
class StabilityEvent:
    iteration: int
    event: str
    message: str
    context: dict = field(default_factory=dict)


@dataclass
class TrainResult:
    policy: GaussianPolicy
    discriminator: adv.Discriminator
    curve: list
    events: list
    final_mean_return: float
    final_std_return: float
    value_fn: object = None

    @property
    def env_steps(self) -> int:
        return self.curve[-1]["env_steps"] if self.curve else 0


def agent_pairs(buffer, pair_mode: PairMode) -> np.ndarray:
    second = buffer.env_actions if pair_mode is PairMode.STATE_ACTION else buffer.next_states
    return adv.make_pairs(buffer.states, second, pair_mode)


def disc_phase(disc, opt, config: TrainerConfig, expert_pairs, agent_pairs_, rng):
    """``disc_epochs`` passes: all expert pairs against an equal-size agent subsample."""
    n_exp = len(expert_pairs)
    n_agent = len(agent_pairs_)
    mb = config.disc_minibatch
    history = []
    for _ in range(config.disc_epochs):
        e_order = rng.permutation(n_exp)
        a_idx = rng.choice(n_agent, size=n_exp, replace=n_exp > n_agent)
        for start in range(0, n_exp, mb):
            e = expert_pairs[e_order[start : start + mb]]
            a = agent_pairs_[a_idx[start : start + mb]]
            disc, opt, stats = adv.disc_update(disc, config.kind, config.variant, e, a, config.reg, opt)
            history.append(stats)
    summary = {k: float(np.mean([h[k] for h in history])) for k in history[0]}
    return disc, opt, summary


def _train(spec: EnvSpec, demos: DemoDataset, config: TrainerConfig, callback: Callable | None = None):
    if demos.env_id != spec.env_id:
        raise ValueError(f"demos were recorded on {demos.env_id}, not {spec.env_id}")
    pair_mode = demos.mode
    init_seq, rollout_seq, disc_seq, ppo_seq = np.random.SeedSequence(config.seed).spawn(4)
    init_rng = np.random.default_rng(init_seq)
    rollout_rng = np.random.default_rng(rollout_seq)
    disc_rng = np.random.default_rng(disc_seq)
    ppo_rng = np.random.default_rng(ppo_seq)
    eval_seed = derive_seed(config.seed, "eval")

    ppo_cfg = config.ppo
    policy = make_policy(spec.obs_dim, spec.act_dim, init_rng, config.hidden, lr=ppo_cfg.policy_lr)
    value_fn = make_value_function(spec.obs_dim, init_rng, config.hidden, lr=ppo_cfg.value_lr)
    disc = adv.make_discriminator(spec.obs_dim, spec.act_dim, pair_mode, init_rng, config.hidden)
    disc_opt = dm.AdamState.zeros(disc.spec.param_count, config.disc_lr)
    env = RewardFreeEnv(spec)
    expert_pairs = demos.pairs()

    curve, events = [], []
    env_steps = 0
    last = {"objective": 0.0, "penalty": 0.0, "grad_norm_raw": 0.0, "grad_norm_applied": 0.0}
    mean_reward = 0.0
    for it in range(config.n_iterations):
        buf = collect_rollout(policy, spec, config.steps_per_iteration, rollout_rng, step_fn=env.step)
        env_steps += len(buf)
        event = NO_EVENT
        try:
            pairs = agent_pairs(buf, pair_mode)
            disc, disc_opt, last = disc_phase(disc, disc_opt, config, expert_pairs, pairs, disc_rng)
            buf.rewards = adv.reward_batch(disc, config.kind, config.variant, pairs)
            mean_reward = float(np.mean(buf.rewards))
            fill_values(buf, value_fn)
            lam = 1.0 if ppo_cfg.update_rule == "reinforce" else ppo_cfg.gae_lambda
            compute_gae(buf, ppo_cfg.gamma, lam)
            policy, value_fn, _ = ppo_update(policy, value_fn, buf, ppo_cfg, ppo_rng)
        except StabilityError as exc:
            event = exc.event
            events.append(StabilityEvent(it, exc.event, str(exc), dict(exc.context)))
            log.warning("iteration %d: stability event %s (%s)", it, exc.event, exc)
        mean_ret, std_ret = evaluate_policy(policy, spec, config.eval_episodes, eval_seed)
        row = {
            "iteration": it,
            "env_steps": env_steps,
            "mean_true_return": mean_ret,
            "std_true_return": std_ret,
            "disc_objective": last["objective"],
            "penalty": last["penalty"],
            "mean_adv_reward": mean_reward,
            "grad_norm_raw": last["grad_norm_raw"],
            "grad_norm_applied": last["grad_norm_applied"],
            "stability_event": event,
        }
        curve.append(row)
        if callback is not None:
            callback(row)
        if event != NO_EVENT:
            break

    final_mean, final_std = evaluate_policy(
        policy, spec, config.final_eval_episodes, derive_seed(config.seed, "final-eval")
    )
    return TrainResult(policy, disc, curve, events, final_mean, final_std, value_fn)


def train_fvim(spec: EnvSpec, demos: DemoDataset, config: TrainerConfig, callback=None) -> TrainResult:
    """f-VIM: discriminator over expert and agent (s, a) pairs."""
    if demos.mode is not PairMode.STATE_ACTION:
        raise ModeError("f-VIM needs state-action demonstrations")
    return _train(spec, demos, config, callback)


def train_fvimo(spec: EnvSpec, demos: DemoDataset, config: TrainerConfig, callback=None) -> TrainResult:
    """f-VIMO: discriminator over (s, s') transitions; expert actions are never read."""
    if demos.mode is not PairMode.STATE_TRANSITION:
        raise ModeError("f-VIMO needs observation-only demonstrations; call strip_actions first")
    return _train(spec, demos, config, callback)


def train(spec: EnvSpec, demos: DemoDataset, config: TrainerConfig, callback=None) -> TrainResult:
    """Dispatch on the dataset mode."""
    if demos.mode is PairMode.STATE_ACTION:
        return train_fvim(spec, demos, config, callback)
    return train_fvimo(spec, demos, config, callback)


DEMO_COUNTS = (1, 5, 10, 15, 20)

SWEEP_COLUMNS = (
    "mode",
    "kind",
    "variant",
    "psi",
    "n_demos",
    "seed",
    "final_mean_return",
    "final_std_return",
    "env_steps",
    "stability_event",
)


def demo_count_seed(base_seed: int, count: int) -> int:
    return derive_seed(base_seed, "demo-count", count)


def demo_sweep(spec: EnvSpec, demos: DemoDataset, config: TrainerConfig, counts: Sequence[int] = DEMO_COUNTS):
    """Train once per demonstration count; returns one row per count.

    Each cell subsamples and trains with ``demo_count_seed(config.seed, k)``.
    Trainer failures are recorded in the row instead of aborting the sweep.
    """
    if max(counts) > len(demos):
        raise ValueError(f"largest count {max(counts)} exceeds the {len(demos)} available trajectories")
    rows = []
    for k in counts:
        cell_seed = demo_count_seed(config.seed, k)
        sub = subsample(demos, k, cell_seed)
        cfg = replace(config, seed=cell_seed, n_demos=k)
        row = {
            "mode": "ilo" if demos.mode is PairMode.STATE_TRANSITION else "il",
            "kind": cfg.kind.value,
            "variant": cfg.variant.value,
            "psi": cfg.reg.psi,
            "n_demos": k,
            "seed": config.seed,
        }
        try:
            result = train(spec, sub, cfg)
        except Exception as exc:  # noqa: BLE001 - a failed cell is data, not a crash
            log.error("demo sweep cell k=%d failed: %s", k, exc)
            row.update(final_mean_return=float("nan"), final_std_return=float("nan"),
                       env_steps=0, stability_event=type(exc).__name__)
        else:
            event = result.events[0].event if result.events else NO_EVENT
            row.update(final_mean_return=result.final_mean_return, final_std_return=result.final_std_return,
                       env_steps=result.env_steps, stability_event=event)
        rows.append(row)
    return rows
