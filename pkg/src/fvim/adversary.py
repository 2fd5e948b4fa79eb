"""Discriminator objectives, rewards and regularization.

Three variational-bound variants are supported:

``reparameterized``
    ``E_expert[f*^-1(r(V))] - E_agent[r(V)]`` with agent reward ``r(V)``.
``original``
    The f-GAN form ``E_expert[g_f(V)] - E_agent[f*(g_f(V))]`` with agent
    reward ``f*(g_f(V))``.  With the GAN divergence this is exactly GAIL
    (state-action pairs) or GAIFO (state transitions).
``swapped``
    The bound with the two distributions exchanged,
    ``E_agent[g(V)] - E_expert[f*(g(V))]`` with ``g(u) = -sigmoid(u)``
    (halved for TV so it stays inside dom f*), and agent reward ``-g(V)``.

The objective is maximized by the discriminator.  ``disc_update`` performs
Adam descent on its negation plus the optional gradient penalty.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import diffmath as dm
from . import fdiv
from .errors import ConfigError, DomainError, DomainStabilityError, NonFiniteLossError
from .fdiv import DivergenceKind


class PairMode(str, enum.Enum):
    STATE_ACTION = "state_action"
    STATE_TRANSITION = "state_transition"


class LossVariant(str, enum.Enum):
    REPARAMETERIZED = "reparameterized"
    ORIGINAL = "original"
    SWAPPED = "swapped"

    @classmethod
    def parse(cls, value) -> "LossVariant":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(v.value for v in cls)
            raise ValueError(f"unknown loss variant {value!r}; expected one of {names}") from None


@dataclass
class RegConfig:
    psi: float = 10.0
    grad_clip_threshold: float | None = None
    # "param": gradient w.r.t. discriminator weights; "input": w.r.t. the pair
    penalty_mode: str = "param"

    def __post_init__(self):
        if self.psi < 0:
            raise ConfigError("psi must be non-negative")
        if self.grad_clip_threshold is not None and self.grad_clip_threshold <= 0:
            raise ConfigError("grad_clip_threshold must be positive")
        if self.penalty_mode not in ("param", "input"):
            raise ConfigError(f"unknown penalty_mode {self.penalty_mode!r}")


@dataclass
class Discriminator:
    spec: dm.NetSpec
    params: np.ndarray
    pair_mode: PairMode

    def output(self, pairs) -> np.ndarray:
        return dm.net_forward(self.spec, self.params, pairs)[..., 0]


def pair_dim(obs_dim: int, act_dim: int, pair_mode: PairMode) -> int:
    return obs_dim + act_dim if PairMode(pair_mode) is PairMode.STATE_ACTION else 2 * obs_dim


def make_discriminator(obs_dim, act_dim, pair_mode, rng, hidden=(64, 64)) -> Discriminator:
    pair_mode = PairMode(pair_mode)
    spec = dm.NetSpec(pair_dim(obs_dim, act_dim, pair_mode), tuple(hidden), 1)
    return Discriminator(spec, dm.init_params(spec, rng), pair_mode)


def make_pairs(states, second, pair_mode) -> np.ndarray:
    """Concatenate ``(s, a)`` or ``(s, s')`` rows."""
    return np.concatenate([np.asarray(states), np.asarray(second)], axis=-1)


# --- activations per variant -------------------------------------------------


def _swapped_activation(kind, v):
    scale = fdiv.reward_scale(kind)
    s = expit(v)
    return -scale * s, -scale * s * (1.0 - s)


def _guard(fn, *args):
    try:
        return fn(*args)
    except DomainError as exc:
        raise DomainStabilityError(str(exc)) from exc


def _terms(kind, variant, v):
    """Per-sample ``(first, d_first, second, d_second)``.

    The objective is ``mean(first over P) - mean(second over Q)`` where P is
    the expert sample except for the swapped bound, where P is the agent.
    """
    if variant is LossVariant.REPARAMETERIZED:
        h, h1, _ = fdiv.reparam_activation_derivs(kind, v)
        return h, h1, fdiv.reward_map(kind, v), fdiv.reward_map_grad(kind, v)
    if variant is LossVariant.ORIGINAL:
        g = fdiv.original_activation(kind, v)
        g1 = fdiv.original_activation_grad(kind, v)
    else:
        g, g1 = _swapped_activation(kind, v)
    fstar = _guard(fdiv.conjugate, kind, g)
    fstar1 = _guard(fdiv.conjugate_grad, kind, g)
    return g, g1, fstar, fstar1 * g1


def _split(variant, expert_v, agent_v):
    """Which sample plays P (first term) and which plays Q (second term)."""
    if variant is LossVariant.SWAPPED:
        return agent_v, expert_v
    return expert_v, agent_v


def _check_batches(disc: Discriminator, *batches):
    for b in batches:
        b = np.asarray(b)
        if b.ndim != 2 or b.shape[0] == 0:
            raise ValueError("discriminator batches must be non-empty 2-D arrays")
        if b.shape[1] != disc.spec.input_dim:
            raise ValueError(
                f"pair width {b.shape[1]} does not match {disc.pair_mode.value} input {disc.spec.input_dim}"
            )


def disc_objective(disc: Discriminator, kind, variant, expert_batch, agent_batch) -> float:
    """The variational lower bound for the current discriminator (to be maximized)."""
    return objective_and_grad(disc, kind, variant, expert_batch, agent_batch, need_grad=False)[0]


def objective_and_grad(disc, kind, variant, expert_batch, agent_batch, need_grad=True):
    kind = DivergenceKind.parse(kind)
    variant = LossVariant.parse(variant)
    _check_batches(disc, expert_batch, agent_batch)
    p_batch, q_batch = _split(variant, np.asarray(expert_batch), np.asarray(agent_batch))
    vp = disc.output(p_batch)
    vq = disc.output(q_batch)
    first, d_first, _, _ = _terms(kind, variant, vp)
    _, _, second, d_second = _terms(kind, variant, vq)
    obj = float(np.mean(first) - np.mean(second))
    if not np.isfinite(obj):
        raise NonFiniteLossError("non-finite discriminator objective", kind=kind.value, variant=variant.value)
    if not need_grad:
        return obj, None
    gp, _ = dm.net_gradients(disc.spec, disc.params, p_batch, (d_first / len(vp))[:, None])
    gq, _ = dm.net_gradients(disc.spec, disc.params, q_batch, (d_second / len(vq))[:, None])
    return obj, gp - gq


def grad_penalty(disc: Discriminator, kind, expert_batch, psi: float, mode: str = "param") -> float:
    """``psi/2 * mean ||grad f*^-1(r(V))||^2`` over expert pairs."""
    return penalty_and_grad(disc, kind, expert_batch, psi, mode, need_grad=False)[0]


def penalty_and_grad(disc: Discriminator, kind, expert_batch, psi: float, mode: str = "param", need_grad=True):
    """Penalty value and its gradient with respect to the discriminator parameters.

    In ``param`` mode the inner gradient is taken with respect to the
    discriminator weights; in ``input`` mode with respect to the pair.
    """
    if psi < 0:
        raise ValueError("psi must be non-negative")
    if mode not in ("param", "input"):
        raise ValueError(f"unknown penalty mode {mode!r}")
    if psi == 0:
        return 0.0, np.zeros_like(disc.params)
    kind = DivergenceKind.parse(kind)
    _check_batches(disc, expert_batch)
    x = np.asarray(expert_batch, dtype=np.float64)
    n = x.shape[0]
    if mode == "param":
        v, inner, _ = dm.forward_and_scalar_grads(disc.spec, disc.params, x)
    else:
        v = disc.output(x)
        _, inner = dm.net_gradients(disc.spec, disc.params, x, np.ones((n, 1)))
    _, h1, h2 = fdiv.reparam_activation_derivs(kind, v)
    sq = np.sum(inner * inner, axis=1)
    value = 0.5 * psi * float(np.mean(h1 * h1 * sq))
    if not need_grad:
        return value, None
    coef = psi / n
    # d/dw of h'(V)^2 |inner|^2 splits into a term through h'(V) and one through inner
    first, _ = dm.net_gradients(disc.spec, disc.params, x, (coef * h1 * h2 * sq)[:, None])
    tangents = {"param_tangents": inner} if mode == "param" else {"input_tangents": inner}
    second = dm.param_grad_jvp(disc.spec, disc.params, x, weights=coef * h1 * h1, **tangents)
    return value, first + second


def clip_grad_norm(grad, threshold: float | None):
    """Rescale ``grad`` to at most ``threshold`` Euclidean norm.

    Returns ``(grad, raw_norm, applied_norm)``.
    """
    raw = float(np.linalg.norm(grad))
    if threshold is not None and raw > threshold:
        grad = grad * (threshold / raw)
    return grad, raw, float(np.linalg.norm(grad))


def disc_update(disc: Discriminator, kind, variant, expert_batch, agent_batch, reg: RegConfig, opt: dm.AdamState):
    """One Adam step ascending the objective minus the penalty.

    Returns ``(disc, opt, stats)``; ``disc`` is updated in place.
    """
    kind = DivergenceKind.parse(kind)
    variant = LossVariant.parse(variant)
    if reg.psi > 0 and variant is not LossVariant.REPARAMETERIZED:
        raise ConfigError("the gradient penalty is defined for the reparameterized variant only")
    obj, g_obj = objective_and_grad(disc, kind, variant, expert_batch, agent_batch)
    pen, g_pen = penalty_and_grad(disc, kind, expert_batch, reg.psi, reg.penalty_mode)
    grad = g_pen - g_obj
    grad, raw, applied = clip_grad_norm(grad, reg.grad_clip_threshold)
    context = {"kind": kind.value, "variant": variant.value, "where": "discriminator"}
    opt, disc.params = dm.adam_step(opt, disc.params, grad, context)
    stats = {
        "objective": obj,
        "penalty": pen,
        "grad_norm_raw": raw,
        "grad_norm_applied": applied,
    }
    return disc, opt, stats


def reward_batch(disc: Discriminator, kind, variant, pairs) -> np.ndarray:
    """Per-timestep adversarial rewards for agent pairs."""
    kind = DivergenceKind.parse(kind)
    variant = LossVariant.parse(variant)
    _check_batches(disc, pairs)
    v = disc.output(pairs)
    if variant is LossVariant.ORIGINAL:
        return _guard(fdiv.conjugate, kind, fdiv.original_activation(kind, v))
    # reparameterized r(V) and the swapped bound's -g(V) are the same sigmoid
    return fdiv.reward_map(kind, v)
