"""Two small continuous-control tasks with known dynamics.

``pointmass2d-v0``
    A point mass on the plane driven by bounded accelerations toward the
    origin.  State ``(x, y, vx, vy)``.
``pendulum-swingup-v0``
    The classic torque-limited pendulum with observation
    ``(cos th, sin th, th_dot)``; ``th = 0`` is upright.

Environments never terminate early; every episode lasts ``horizon`` steps.
States are plain numpy vectors and stepping is a pure function, so the same
code serves single states and batches of shape ``(n, obs_dim)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

POINTMASS = "pointmass2d-v0"
PENDULUM = "pendulum-swingup-v0"

DT = 0.05
POINTMASS_VMAX = 1.0
# Walls keep the mass inside [-2, 2]^2; the velocity component into a wall is zeroed.
POINTMASS_WALL = 2.0
PENDULUM_G = 10.0
PENDULUM_M = 1.0
PENDULUM_L = 1.0
PENDULUM_MAX_SPEED = 8.0


@dataclass(frozen=True)
class EnvSpec:
    env_id: str
    obs_dim: int
    act_dim: int
    horizon: int
    action_bound: float


ENV_SPECS = {
    POINTMASS: EnvSpec(POINTMASS, obs_dim=4, act_dim=2, horizon=100, action_bound=1.0),
    PENDULUM: EnvSpec(PENDULUM, obs_dim=3, act_dim=1, horizon=200, action_bound=2.0),
}


def make_env(env_id: str) -> EnvSpec:
    try:
        return ENV_SPECS[env_id]
    except KeyError:
        raise ValueError(f"unknown env_id {env_id!r}; expected one of {sorted(ENV_SPECS)}") from None


class StepResult(NamedTuple):
    next_state: np.ndarray
    reward: float | np.ndarray
    done: bool | np.ndarray


def env_reset(spec: EnvSpec, rng_seed) -> np.ndarray:
    """Initial state; ``rng_seed`` may be an int or a numpy Generator."""
    return reset_batch(spec, np.random.default_rng(rng_seed), None)


def reset_batch(spec: EnvSpec, rng: np.random.Generator, n: int | None):
    shape = () if n is None else (n,)
    if spec.env_id == POINTMASS:
        pos = rng.uniform(-1.0, 1.0, size=shape + (2,))
        return np.concatenate([pos, np.zeros(shape + (2,))], axis=-1)
    theta = rng.uniform(-math.pi, math.pi, size=shape)
    theta_dot = rng.uniform(-1.0, 1.0, size=shape)
    return np.stack([np.cos(theta), np.sin(theta), theta_dot], axis=-1)


def env_step(spec: EnvSpec, state, action, t: int | None = None) -> StepResult:
    """Advance one step.  ``done`` is set when ``t + 1`` reaches the horizon."""
    state = np.asarray(state, dtype=np.float64)
    action = np.asarray(action, dtype=np.float64)
    if state.shape[-1] != spec.obs_dim:
        raise ValueError(f"state must have length {spec.obs_dim}, got {state.shape}")
    if action.shape[-1] != spec.act_dim or action.shape[:-1] != state.shape[:-1]:
        raise ValueError(f"action must have length {spec.act_dim}, got {action.shape}")
    nxt, reward = _dynamics(spec, state, action)
    done = False if t is None else (t + 1 >= spec.horizon)
    if state.ndim > 1:
        done = np.full(state.shape[:-1], done)
    elif np.ndim(reward) == 0:
        reward = float(reward)
    return StepResult(nxt, reward, done)


def clip_action(spec: EnvSpec, action):
    return np.clip(action, -spec.action_bound, spec.action_bound)


def _dynamics(spec: EnvSpec, state, action):
    a = clip_action(spec, action)
    if spec.env_id == POINTMASS:
        pos, vel = state[..., :2], state[..., 2:]
        vel = np.clip(vel + a * DT, -POINTMASS_VMAX, POINTMASS_VMAX)
        pos = pos + vel * DT
        hit = np.abs(pos) > POINTMASS_WALL
        pos = np.clip(pos, -POINTMASS_WALL, POINTMASS_WALL)
        vel = np.where(hit, 0.0, vel)
        reward = -np.linalg.norm(pos, axis=-1) - 0.01 * np.sum(a * a, axis=-1)
        return np.concatenate([pos, vel], axis=-1), reward

    cos_th, sin_th, th_dot = state[..., 0], state[..., 1], state[..., 2]
    th = np.arctan2(sin_th, cos_th)
    u = a[..., 0]
    reward = -(th * th + 0.1 * th_dot * th_dot + 0.001 * u * u)
    new_th_dot = th_dot + (
        3.0 * PENDULUM_G / (2.0 * PENDULUM_L) * np.sin(th) + 3.0 / (PENDULUM_M * PENDULUM_L**2) * u
    ) * DT
    new_th_dot = np.clip(new_th_dot, -PENDULUM_MAX_SPEED, PENDULUM_MAX_SPEED)
    new_th = _wrap(th + new_th_dot * DT)
    return np.stack([np.cos(new_th), np.sin(new_th), new_th_dot], axis=-1), reward


def _wrap(theta):
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


def angle(state) -> np.ndarray:
    """Pendulum angle in [-pi, pi] recovered from an observation."""
    state = np.asarray(state)
    return np.arctan2(state[..., 1], state[..., 0])


class RewardFreeEnv:
    """Stepping view handed to imitation trainers: next states only, no reward."""

    def __init__(self, spec: EnvSpec):
        self.spec = spec

    def reset(self, rng: np.random.Generator, n: int):
        return reset_batch(self.spec, rng, n)

    def step(self, states, actions):
        return _dynamics(self.spec, states, actions)[0]


def pd_controller(spec: EnvSpec, kp: float = 10.0, kd: float = 5.0):
    """Proportional-derivative controller for the point mass, used as an oracle."""
    if spec.env_id != POINTMASS:
        raise ValueError("the PD controller is defined for the point mass only")

    def act(states):
        states = np.asarray(states)
        return clip_action(spec, -kp * states[..., :2] - kd * states[..., 2:])

    return act


def rollout_returns(spec: EnvSpec, act, n_episodes: int, seed) -> np.ndarray:
    """True returns of a batch of episodes under ``act(states) -> actions``."""
    rng = np.random.default_rng(seed)
    states = reset_batch(spec, rng, n_episodes)
    total = np.zeros(n_episodes)
    for _ in range(spec.horizon):
        states, reward = _dynamics(spec, states, act(states))
        total += reward
    return total


def random_policy(spec: EnvSpec, seed):
    """Uniform random actions over the admissible box."""
    rng = np.random.default_rng(seed)

    def act(states):
        shape = np.shape(states)[:-1] + (spec.act_dim,)
        return rng.uniform(-spec.action_bound, spec.action_bound, size=shape)

    return act
