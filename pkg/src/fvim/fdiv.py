"""The four f-divergences used throughout the package.

Each divergence is described by its generator ``f``, convex conjugate ``f*``,
the inverse of the conjugate, the classic f-GAN output activation and the
sigmoid-based reparameterized activation ``f*^-1(r(v))``.

All functions accept scalars or numpy arrays and evaluate elementwise.  A
scalar input yields a Python float.  Arguments outside a function's domain
raise :class:`~fvim.errors.DomainError`; nothing is silently clamped, except
that :func:`reward_map` keeps its sigmoid strictly inside ``(0, 1)`` where
float64 rounding would otherwise land on the boundary.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit, xlogy

from .errors import ConjugateOverflowError, DomainError

LOG4 = math.log(4.0)

# exp(t - 1) overflows float64 shortly after t = 710.
KL_CONJUGATE_MAX = 700.0

_REWARD_LO = np.finfo(np.float64).tiny
_REWARD_HI = np.nextafter(1.0, 0.0)


class DivergenceKind(str, enum.Enum):
    TV = "tv"
    KL = "kl"
    RKL = "rkl"
    GAN = "gan"

    @classmethod
    def parse(cls, value) -> "DivergenceKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown divergence {value!r}; expected one of {names}") from None


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float
    lower_open: bool = False
    upper_open: bool = False

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError("interval lower bound exceeds upper bound")

    def contains(self, x):
        x = np.asarray(x, dtype=np.float64)
        lo = x > self.lower if (self.lower_open or math.isinf(self.lower)) else x >= self.lower
        hi = x < self.upper if (self.upper_open or math.isinf(self.upper)) else x <= self.upper
        return lo & hi

    def __str__(self):
        left = "(" if self.lower_open or math.isinf(self.lower) else "["
        right = ")" if self.upper_open or math.isinf(self.upper) else "]"
        return f"{left}{self.lower}, {self.upper}{right}"


_REALS = Interval(-math.inf, math.inf, True, True)
_NEGATIVE = Interval(-math.inf, 0.0, True, True)
_POSITIVE = Interval(0.0, math.inf, True, True)
_HALF = Interval(-0.5, 0.5)


@dataclass(frozen=True)
class DivergenceSpec:
    kind: DivergenceKind
    conjugate_domain: Interval
    inverse_domain: Interval

    @property
    def generator_at_one(self) -> float:
        # The GAN row is 2 * JS - log 4, so its generator is offset.
        return -LOG4 if self.kind is DivergenceKind.GAN else 0.0


SPECS = {
    DivergenceKind.TV: DivergenceSpec(DivergenceKind.TV, _HALF, _HALF),
    DivergenceKind.KL: DivergenceSpec(DivergenceKind.KL, _REALS, _POSITIVE),
    DivergenceKind.RKL: DivergenceSpec(DivergenceKind.RKL, _NEGATIVE, _REALS),
    DivergenceKind.GAN: DivergenceSpec(DivergenceKind.GAN, _NEGATIVE, _POSITIVE),
}


def divergence_spec(kind) -> DivergenceSpec:
    return SPECS[DivergenceKind.parse(kind)]


def conjugate_domain(kind) -> Interval:
    return divergence_spec(kind).conjugate_domain


def inverse_domain(kind) -> Interval:
    return divergence_spec(kind).inverse_domain


def _prepare(x):
    arr = np.asarray(x, dtype=np.float64)
    return arr, arr.ndim == 0


def _finish(arr, scalar):
    return float(arr) if scalar else arr


def _require(interval: Interval, x, what: str, kind):
    ok = interval.contains(x)
    if not np.all(ok):
        bad = np.asarray(x)[~ok].ravel()[0]
        raise DomainError(f"{what}({kind.value}) undefined at {bad!r}; domain is {interval}")


def _log1mexp(a):
    """log(1 - exp(-a)) for a > 0, accurate at both ends."""
    a = np.asarray(a, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.where(
            a < math.log(2.0),
            np.log(-np.expm1(-a)),
            np.log1p(-np.exp(-np.maximum(a, math.log(2.0)))),
        )


def generator(kind, u):
    """The convex generator f(u) for u > 0."""
    kind = DivergenceKind.parse(kind)
    u, scalar = _prepare(u)
    if not np.all(u > 0):
        raise DomainError(f"generator({kind.value}) requires u > 0")
    if kind is DivergenceKind.TV:
        out = 0.5 * np.abs(u - 1.0)
    elif kind is DivergenceKind.KL:
        out = xlogy(u, u)
    elif kind is DivergenceKind.RKL:
        out = -np.log(u)
    else:
        out = xlogy(u, u) - xlogy(u + 1.0, u + 1.0)
    return _finish(out, scalar)


def conjugate(kind, t):
    """The Fenchel conjugate f*(t)."""
    kind = DivergenceKind.parse(kind)
    t, scalar = _prepare(t)
    _require(SPECS[kind].conjugate_domain, t, "conjugate", kind)
    if kind is DivergenceKind.TV:
        out = t.copy()
    elif kind is DivergenceKind.KL:
        if np.any(t > KL_CONJUGATE_MAX):
            raise ConjugateOverflowError(
                f"conjugate(kl) overflows at t={float(np.max(t)):.6g}", kind=kind.value
            )
        out = np.exp(t - 1.0)
    elif kind is DivergenceKind.RKL:
        out = -1.0 - np.log(-t)
    else:
        out = -_log1mexp(-t)
    return _finish(out, scalar)


def conjugate_grad(kind, t):
    """Derivative of f*(t); same domain rules as :func:`conjugate`."""
    kind = DivergenceKind.parse(kind)
    t, scalar = _prepare(t)
    _require(SPECS[kind].conjugate_domain, t, "conjugate", kind)
    if kind is DivergenceKind.TV:
        out = np.ones_like(t)
    elif kind is DivergenceKind.KL:
        if np.any(t > KL_CONJUGATE_MAX):
            raise ConjugateOverflowError(
                f"conjugate(kl) overflows at t={float(np.max(t)):.6g}", kind=kind.value
            )
        out = np.exp(t - 1.0)
    elif kind is DivergenceKind.RKL:
        out = -1.0 / t
    else:
        out = 1.0 / np.expm1(-t)
    return _finish(out, scalar)


def conjugate_inverse(kind, t):
    """Inverse of the conjugate, f*^-1(t)."""
    kind = DivergenceKind.parse(kind)
    t, scalar = _prepare(t)
    _require(SPECS[kind].inverse_domain, t, "conjugate_inverse", kind)
    if kind is DivergenceKind.TV:
        out = t.copy()
    elif kind is DivergenceKind.KL:
        out = 1.0 + np.log(t)
    elif kind is DivergenceKind.RKL:
        with np.errstate(over="ignore"):
            out = -np.exp(-1.0 - t)
    else:
        out = _log1mexp(t)
    return _finish(out, scalar)


def original_activation(kind, v):
    """The f-GAN output activation g_f, mapping R into dom f*."""
    kind = DivergenceKind.parse(kind)
    v, scalar = _prepare(v)
    if kind is DivergenceKind.TV:
        out = 0.5 * np.tanh(v)
    elif kind is DivergenceKind.KL:
        out = v.copy()
    elif kind is DivergenceKind.RKL:
        with np.errstate(over="ignore"):
            out = -np.exp(v)
    else:
        out = log_expit(v)
    return _finish(out, scalar)


def original_activation_grad(kind, v):
    kind = DivergenceKind.parse(kind)
    v, scalar = _prepare(v)
    if kind is DivergenceKind.TV:
        out = 0.5 * (1.0 - np.tanh(v) ** 2)
    elif kind is DivergenceKind.KL:
        out = np.ones_like(v)
    elif kind is DivergenceKind.RKL:
        with np.errstate(over="ignore"):
            out = -np.exp(v)
    else:
        out = expit(-v)
    return _finish(out, scalar)


def reward_scale(kind) -> float:
    """Upper end of the reward interval: 1/2 for TV, 1 otherwise."""
    return 0.5 if DivergenceKind.parse(kind) is DivergenceKind.TV else 1.0


def reward_map(kind, v):
    """Bounded reward r(v): a sigmoid, halved for TV to stay in dom f*^-1."""
    v, scalar = _prepare(v)
    s = np.clip(expit(v), _REWARD_LO, _REWARD_HI)
    return _finish(reward_scale(kind) * s, scalar)


def reward_map_grad(kind, v):
    v, scalar = _prepare(v)
    s = expit(v)
    return _finish(reward_scale(kind) * s * (1.0 - s), scalar)


def reparam_activation(kind, v):
    """g_f(v) = f*^-1(r(v)), evaluated in a form that stays finite for finite v."""
    return reparam_activation_derivs(kind, v)[0]


def reparam_activation_derivs(kind, v):
    """Value, first and second derivative of f*^-1(r(v)) with respect to v."""
    kind = DivergenceKind.parse(kind)
    v, scalar = _prepare(v)
    s = expit(v)
    sp = s * (1.0 - s)  # sigma'
    spp = sp * (1.0 - 2.0 * s)  # sigma''
    if kind is DivergenceKind.TV:
        h, h1, h2 = 0.5 * s, 0.5 * sp, 0.5 * spp
    elif kind is DivergenceKind.KL:
        h = 1.0 + log_expit(v)
        h1 = expit(-v)
        h2 = -sp
    elif kind is DivergenceKind.RKL:
        e = np.exp(-1.0 - s)
        h = -e
        h1 = e * sp
        h2 = e * (spp - sp * sp)
    else:
        # h = log(1 - exp(-s)); write h' = (1 - s) * q(s) with q(s) = s / expm1(s).
        h = log_expit(v) + _log_one_minus_exp_neg_over(s)
        small = s < 1e-4
        safe = np.where(small, 1.0, s)
        em1 = np.expm1(safe)
        q = np.where(small, 1.0 - s / 2.0 + s * s / 12.0, safe / em1)
        dq = np.where(small, -0.5 + s / 6.0, (em1 - safe * np.exp(safe)) / (em1 * em1))
        h1 = (1.0 - s) * q
        h2 = sp * (-q + (1.0 - s) * dq)
    return _finish(h, scalar), _finish(h1, scalar), _finish(h2, scalar)


def _log_one_minus_exp_neg_over(s):
    """log((1 - exp(-s)) / s) for s in (0, 1], exact as s -> 0."""
    small = s < 1e-4
    safe = np.where(small, 1.0, s)
    big = np.log(-np.expm1(-safe) / safe)
    return np.where(small, -s / 2.0 + s * s / 24.0, big)
