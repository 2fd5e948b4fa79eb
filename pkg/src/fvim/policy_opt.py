"""Gaussian policies, generalized advantage estimation and clipped PPO.

Used twice: to train experts on the true task reward, and as the generator
update inside the adversarial imitation trainers, where rewards come from the
discriminator instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import diffmath as dm
from .envsim import EnvSpec, clip_action, reset_batch, _dynamics
from .errors import NonFiniteLossError

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class PPOConfig:
    clip_ratio: float = 0.2
    gamma: float = 0.995
    gae_lambda: float = 0.97
    entropy_coef: float = 0.001
    ppo_epochs: int = 10
    minibatch_size: int = 256
    policy_lr: float = 3e-4
    value_lr: float = 3e-4
    advantage_normalization: bool = True
    # "ppo", or "reinforce" for a single likelihood-ratio step per batch
    update_rule: str = "ppo"

    def __post_init__(self):
        if self.clip_ratio <= 0:
            raise ValueError("clip_ratio must be positive")
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")
        if self.update_rule not in ("ppo", "reinforce"):
            raise ValueError(f"unknown update_rule {self.update_rule!r}")


@dataclass
class GaussianPolicy:
    """Diagonal Gaussian with a network mean and a state-independent log-std."""

    spec: dm.NetSpec
    params: np.ndarray
    log_std: np.ndarray
    opt: dm.AdamState | None = None

    @property
    def act_dim(self) -> int:
        return self.spec.output_dim

    def mean(self, states):
        return dm.net_forward(self.spec, self.params, states)

    def log_prob(self, states, actions):
        return gaussian_log_prob(actions, self.mean(states), self.log_std)

    def entropy(self) -> float:
        return float(np.sum(self.log_std + 0.5 + _HALF_LOG_2PI))

    def flat(self):
        return np.concatenate([self.params, self.log_std])


@dataclass
class ValueFunction:
    spec: dm.NetSpec
    params: np.ndarray
    opt: dm.AdamState | None = None

    def __call__(self, states):
        out = dm.net_forward(self.spec, self.params, states)
        return out[..., 0]


def make_policy(obs_dim: int, act_dim: int, rng, hidden=(64, 64), init_log_std: float = -0.5, lr: float = 3e-4):
    spec = dm.NetSpec(obs_dim, tuple(hidden), act_dim)
    params = dm.init_params(spec, rng, last_layer_scale=0.1)
    log_std = np.full(act_dim, float(init_log_std))
    return GaussianPolicy(spec, params, log_std, dm.AdamState.zeros(spec.param_count + act_dim, lr))


def make_value_function(obs_dim: int, rng, hidden=(64, 64), lr: float = 3e-4):
    spec = dm.NetSpec(obs_dim, tuple(hidden), 1)
    return ValueFunction(spec, dm.init_params(spec, rng), dm.AdamState.zeros(spec.param_count, lr))


def gaussian_log_prob(actions, mean, log_std):
    z = (np.asarray(actions) - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - _HALF_LOG_2PI, axis=-1)


def sample_action(policy: GaussianPolicy, state, rng: np.random.Generator):
    """Sample ``mean + exp(log_std) * eps``; the log-density ignores env clipping."""
    mean = policy.mean(state)
    action = mean + np.exp(policy.log_std) * rng.standard_normal(mean.shape)
    return action, gaussian_log_prob(action, mean, policy.log_std)


@dataclass
class RolloutBuffer:
    """Flat per-timestep arrays; episodes are stored contiguously."""

    states: np.ndarray
    actions: np.ndarray
    env_actions: np.ndarray
    next_states: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    next_values: np.ndarray
    dones: np.ndarray
    terminals: np.ndarray
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    true_episode_returns: np.ndarray | None = None

    def __len__(self):
        return self.states.shape[0]

    @property
    def episode_starts(self) -> np.ndarray:
        ends = np.flatnonzero(self.dones)
        return np.concatenate([[0], ends[:-1] + 1]) if ends.size else np.array([0])


def collect_rollout(
    policy: GaussianPolicy,
    spec: EnvSpec,
    n_steps: int,
    rng: np.random.Generator,
    step_fn: Callable | None = None,
) -> RolloutBuffer:
    """Run ``ceil(n_steps / horizon)`` full episodes side by side.

    ``step_fn(states, env_actions) -> next_states`` replaces the true
    dynamics for callers that must not see the environment reward; in that
    case ``rewards`` is left at zero for the caller to fill in.
    """
    n_env = max(1, -(-n_steps // spec.horizon))
    horizon = spec.horizon
    states = reset_batch(spec, rng, n_env)
    shape = (n_env, horizon)
    s_buf = np.empty(shape + (spec.obs_dim,))
    a_buf = np.empty(shape + (spec.act_dim,))
    ns_buf = np.empty(shape + (spec.obs_dim,))
    lp_buf = np.empty(shape)
    r_buf = np.zeros(shape)
    for t in range(horizon):
        actions, logp = sample_action(policy, states, rng)
        env_actions = clip_action(spec, actions)
        if step_fn is None:
            nxt, reward = _dynamics(spec, states, env_actions)
            r_buf[:, t] = reward
        else:
            nxt = step_fn(states, env_actions)
        s_buf[:, t], a_buf[:, t], ns_buf[:, t], lp_buf[:, t] = states, actions, nxt, logp
        states = nxt
    dones = np.zeros(shape, dtype=bool)
    dones[:, -1] = True
    flat = lambda arr: arr.reshape((n_env * horizon,) + arr.shape[2:])
    actions = flat(a_buf)
    return RolloutBuffer(
        states=flat(s_buf),
        actions=actions,
        env_actions=clip_action(spec, actions),
        next_states=flat(ns_buf),
        log_probs=flat(lp_buf),
        rewards=flat(r_buf),
        values=np.zeros(n_env * horizon),
        next_values=np.zeros(n_env * horizon),
        dones=flat(dones),
        # time-limit truncation only; neither task has terminal states
        terminals=np.zeros(n_env * horizon, dtype=bool),
        true_episode_returns=r_buf.sum(axis=1) if step_fn is None else None,
    )


def fill_values(buffer: RolloutBuffer, value_fn: ValueFunction) -> RolloutBuffer:
    buffer.values = value_fn(buffer.states)
    buffer.next_values = value_fn(buffer.next_states)
    return buffer


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float) -> RolloutBuffer:
    """Fill advantages and returns in place (and return the buffer).

    ``delta_t = r_t + gamma * V(s_{t+1}) * (1 - terminal_t) - V(s_t)``; the
    recursion ``A_t = delta_t + gamma * lam * A_{t+1}`` restarts at every
    episode boundary.  ``V(s_{t+1})`` at a truncated final step is the
    bootstrap value held in ``next_values``.
    """
    r = np.asarray(buffer.rewards, dtype=np.float64)
    nonterminal = 1.0 - np.asarray(buffer.terminals, dtype=np.float64)
    cont = 1.0 - np.asarray(buffer.dones, dtype=np.float64)
    delta = r + gamma * buffer.next_values * nonterminal - buffer.values
    adv = np.empty_like(delta)
    running = 0.0
    decay = gamma * lam
    for t in range(len(delta) - 1, -1, -1):
        running = delta[t] + decay * cont[t] * running
        adv[t] = running
    buffer.advantages = adv
    buffer.returns = adv + buffer.values
    return buffer


def normalize_advantages(adv):
    adv = np.asarray(adv, dtype=np.float64)
    centered = adv - adv.mean()
    std = centered.std()
    return centered / std if std > 0 else centered


def clipped_surrogate(ratio, adv, clip_ratio):
    """Per-sample (clipped, unclipped) surrogate terms."""
    unclipped = ratio * adv
    clipped = np.minimum(unclipped, np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * adv)
    return clipped, unclipped


def policy_loss_and_grad(policy: GaussianPolicy, states, actions, old_log_probs, adv, clip_ratio, entropy_coef):
    """Negated clipped surrogate plus entropy bonus, and its gradient.

    The gradient is with respect to ``policy.flat()`` (mean-net params
    followed by log-std).  Returns ``(loss, grad, info)``.
    """
    mean = policy.mean(states)
    inv_std = np.exp(-policy.log_std)
    z = (actions - mean) * inv_std
    logp = np.sum(-0.5 * z * z - policy.log_std - _HALF_LOG_2PI, axis=-1)
    ratio = np.exp(logp - old_log_probs)
    clipped, unclipped = clipped_surrogate(ratio, adv, clip_ratio)
    n = len(adv)
    entropy = policy.entropy()
    loss = -float(np.mean(clipped)) - entropy_coef * entropy
    # the min picks the unclipped branch unless the ratio left the trust interval
    active = ~(((adv > 0) & (ratio > 1.0 + clip_ratio)) | ((adv < 0) & (ratio < 1.0 - clip_ratio)))
    dlogp = np.where(active, ratio * adv, 0.0) / n
    cot_mean = -(dlogp[:, None] * z * inv_std)
    g_params, _ = dm.net_gradients(policy.spec, policy.params, states, cot_mean)
    g_logstd = -np.sum(dlogp[:, None] * (z * z - 1.0), axis=0) - entropy_coef
    info = {
        "ratio": ratio,
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip_ratio)),
        "entropy": entropy,
        "surrogate": float(np.mean(clipped)),
        "surrogate_unclipped": float(np.mean(unclipped)),
    }
    return loss, np.concatenate([g_params, g_logstd]), info


def reinforce_loss_and_grad(policy: GaussianPolicy, states, actions, adv, entropy_coef):
    """Plain likelihood-ratio gradient: -mean(log pi(a|s) * A) - c * H."""
    mean = policy.mean(states)
    inv_std = np.exp(-policy.log_std)
    z = (actions - mean) * inv_std
    logp = np.sum(-0.5 * z * z - policy.log_std - _HALF_LOG_2PI, axis=-1)
    n = len(adv)
    entropy = policy.entropy()
    loss = -float(np.mean(logp * adv)) - entropy_coef * entropy
    w = adv / n
    g_params, _ = dm.net_gradients(policy.spec, policy.params, states, -(w[:, None] * z * inv_std))
    g_logstd = -np.sum(w[:, None] * (z * z - 1.0), axis=0) - entropy_coef
    return loss, np.concatenate([g_params, g_logstd])


def value_loss_and_grad(value_fn: ValueFunction, states, targets):
    pred = value_fn(states)
    err = pred - targets
    loss = float(np.mean(err * err))
    g, _ = dm.net_gradients(value_fn.spec, value_fn.params, states, (2.0 * err / len(err))[:, None])
    return loss, g


def _apply_policy_step(policy: GaussianPolicy, grad):
    opt, flat = dm.adam_step(policy.opt, policy.flat(), grad, {"where": "policy"})
    k = policy.spec.param_count
    policy.opt = opt
    policy.params = flat[:k]
    policy.log_std = np.clip(flat[k:], LOG_STD_MIN, LOG_STD_MAX)


def _check_finite(loss, where):
    if not math.isfinite(loss):
        raise NonFiniteLossError(f"non-finite {where} loss", where=where)


def ppo_update(policy: GaussianPolicy, value_fn: ValueFunction, buffer: RolloutBuffer, config: PPOConfig, rng):
    """Clipped-surrogate PPO epochs over shuffled minibatches; mutates and returns both learners."""
    if buffer.advantages is None:
        raise ValueError("compute_gae must run before ppo_update")
    adv_all = buffer.advantages
    if config.advantage_normalization:
        adv_all = normalize_advantages(adv_all)
    n = len(buffer)
    mb = min(config.minibatch_size, n)
    ratios, clip_fracs, p_losses, v_losses = [], [], [], []
    first_ratio = None

    if config.update_rule == "reinforce":
        loss, grad = reinforce_loss_and_grad(policy, buffer.states, buffer.actions, adv_all, config.entropy_coef)
        _check_finite(loss, "policy")
        _apply_policy_step(policy, grad)
        p_losses.append(loss)

    for epoch in range(config.ppo_epochs):
        order = rng.permutation(n)
        for start in range(0, n, mb):
            idx = order[start : start + mb]
            if config.update_rule == "ppo":
                loss, grad, info = policy_loss_and_grad(
                    policy, buffer.states[idx], buffer.actions[idx], buffer.log_probs[idx],
                    adv_all[idx], config.clip_ratio, config.entropy_coef,
                )
                _check_finite(loss, "policy")
                if first_ratio is None:
                    first_ratio = info["ratio"]
                _apply_policy_step(policy, grad)
                ratios.append(float(np.mean(info["ratio"])))
                clip_fracs.append(info["clip_fraction"])
                p_losses.append(loss)
            vloss, vgrad = value_loss_and_grad(value_fn, buffer.states[idx], buffer.returns[idx])
            _check_finite(vloss, "value")
            value_fn.opt, value_fn.params = dm.adam_step(value_fn.opt, value_fn.params, vgrad, {"where": "value"})
            v_losses.append(vloss)

    stats = {
        "mean_ratio": float(np.mean(ratios)) if ratios else 1.0,
        "clip_fraction": float(np.mean(clip_fracs)) if clip_fracs else 0.0,
        "entropy": policy.entropy(),
        "policy_loss": float(np.mean(p_losses)) if p_losses else 0.0,
        "value_loss": float(np.mean(v_losses)) if v_losses else 0.0,
        "first_ratio": first_ratio,
    }
    return policy, value_fn, stats


def evaluate_policy(policy: GaussianPolicy, spec: EnvSpec, n_episodes: int, seed):
    """Mean and (population) std of true returns under stochastic actions."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    rng = np.random.default_rng(seed)
    states = reset_batch(spec, rng, n_episodes)
    total = np.zeros(n_episodes)
    for _ in range(spec.horizon):
        actions, _ = sample_action(policy, states, rng)
        states, reward = _dynamics(spec, states, clip_action(spec, actions))
        total += reward
    return float(total.mean()), float(total.std())


@dataclass
class ExpertResult:
    policy: GaussianPolicy
    value_fn: ValueFunction
    curve: list = field(default_factory=list)


def train_expert(
    spec: EnvSpec,
    config: PPOConfig,
    n_iterations: int,
    steps_per_iteration: int,
    seed: int,
    hidden=(64, 64),
    callback: Callable | None = None,
) -> ExpertResult:
    """PPO on the true environment reward.

    The curve holds one dict per iteration with the mean and std of the true
    returns of that iteration's training episodes.
    """
    ss = np.random.SeedSequence(seed)
    init_seed, run_seed = ss.spawn(2)
    init_rng = np.random.default_rng(init_seed)
    rng = np.random.default_rng(run_seed)
    policy = make_policy(spec.obs_dim, spec.act_dim, init_rng, hidden, lr=config.policy_lr)
    value_fn = make_value_function(spec.obs_dim, init_rng, hidden, lr=config.value_lr)
    curve = []
    env_steps = 0
    for it in range(n_iterations):
        buf = collect_rollout(policy, spec, steps_per_iteration, rng)
        env_steps += len(buf)
        fill_values(buf, value_fn)
        lam = 1.0 if config.update_rule == "reinforce" else config.gae_lambda
        compute_gae(buf, config.gamma, lam)
        policy, value_fn, stats = ppo_update(policy, value_fn, buf, config, rng)
        row = {
            "iteration": it,
            "env_steps": env_steps,
            "mean_true_return": float(buf.true_episode_returns.mean()),
            "std_true_return": float(buf.true_episode_returns.std()),
            "mean_reward": float(buf.rewards.mean()),
            **{k: v for k, v in stats.items() if k != "first_ratio"},
        }
        curve.append(row)
        if callback is not None:
            callback(row)
    return ExpertResult(policy, value_fn, curve)


def copy_policy(policy: GaussianPolicy) -> GaussianPolicy:
    return replace(policy, params=policy.params.copy(), log_std=policy.log_std.copy())
