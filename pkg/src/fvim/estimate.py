"""Variational f-divergence estimation between one-dimensional distributions.

A small network ``V`` is trained by Adam ascent on the f-GAN lower bound

    E_P[g_f(V(x))] - E_Q[f*(g_f(V(x)))]

using fresh samples at every step.  Because the sources have closed-form
densities, the same bound can also be evaluated by quadrature for the
current network, and the true divergence ``\\int q f(p/q)`` is available from
:func:`numeric_fdiv` (plus :func:`closed_form_kl` for Gaussian pairs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import ndtr

from . import diffmath as dm
from . import fdiv
from .adversary import clip_grad_norm
from .errors import StabilityError
from .fdiv import DivergenceKind

DEFAULT_GRID = (-10.0, 10.0, 100_001)
CLIP_NORM = 100.0


class InsufficientCoverageError(ValueError):
    """The quadrature grid misses more than the allowed tail mass."""


@dataclass(frozen=True)
class Gaussian1D:
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("std must be positive")

    def pdf(self, x):
        z = (np.asarray(x, dtype=np.float64) - self.mean) / self.std
        return np.exp(-0.5 * z * z) / (self.std * math.sqrt(2.0 * math.pi))

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=np.float64) - self.mean) / self.std)

    def sample(self, rng: np.random.Generator, n: int):
        return rng.normal(self.mean, self.std, size=n)


@dataclass(frozen=True)
class GaussianMixture1D:
    weights: tuple
    means: tuple
    stds: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if not (len(self.weights) == len(self.means) == len(self.stds)):
            raise ValueError("weights, means and stds must have equal length")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to 1")
        if any(s <= 0 for s in self.stds):
            raise ValueError("component stds must be positive")

    @property
    def components(self):
        return [Gaussian1D(m, s) for m, s in zip(self.means, self.stds)]

    def pdf(self, x):
        return sum(w * c.pdf(x) for w, c in zip(self.weights, self.components))

    def cdf(self, x):
        return sum(w * c.cdf(x) for w, c in zip(self.weights, self.components))

    def sample(self, rng: np.random.Generator, n: int):
        which = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        z = rng.standard_normal(n)
        return np.asarray(self.means)[which] + np.asarray(self.stds)[which] * z


def _grid(source_p, source_q, grid, tol=1e-8):
    lo, hi, n = grid
    n = int(n)
    if n < 10_000:
        raise ValueError("quadrature grid needs at least 1e4 points")
    for src in (source_p, source_q):
        tail = float(src.cdf(lo) + (1.0 - src.cdf(hi)))
        if tail > tol:
            raise InsufficientCoverageError(f"grid [{lo}, {hi}] leaves tail mass {tail:.3g}")
    return np.linspace(lo, hi, n)


def numeric_fdiv(p, q, kind, grid=DEFAULT_GRID) -> float:
    """Trapezoidal quadrature of ``q(x) f(p(x)/q(x))``."""
    x = _grid(p, q, grid)
    px = p.pdf(x)
    qx = np.maximum(q.pdf(x), 1e-300)
    ratio = np.maximum(px / qx, 1e-300)
    return float(trapezoid(qx * fdiv.generator(kind, ratio), x))


def closed_form_kl(p: Gaussian1D, q: Gaussian1D) -> float:
    return (
        math.log(q.std / p.std)
        + (p.std**2 + (p.mean - q.mean) ** 2) / (2.0 * q.std**2)
        - 0.5
    )


@dataclass
class EstimatorConfig:
    net: dm.NetSpec = field(default_factory=lambda: dm.NetSpec(1, (32, 32), 1))
    steps: int = 2000
    batch_size: int = 1024
    lr: float = 1e-3
    seed: int = 0
    # quadrature grid used to evaluate the bound of the current network
    eval_grid: tuple = (-10.0, 10.0, 2001)

    def __post_init__(self):
        if self.net.input_dim != 1 or self.net.output_dim != 1:
            raise ValueError("the estimator network must map R to R")
        if self.steps < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("steps, batch_size and lr must be positive")


def bound_terms(kind, v):
    """``g_f(v)``, its derivative, ``f*(g_f(v))`` and that derivative."""
    g = fdiv.original_activation(kind, v)
    g1 = fdiv.original_activation_grad(kind, v)
    return g, g1, fdiv.conjugate(kind, g), fdiv.conjugate_grad(kind, g) * g1


def population_bound(spec: dm.NetSpec, params, p, q, kind, grid) -> float:
    """The lower bound of the given network, integrated on a grid."""
    x = np.linspace(*grid[:2], int(grid[2]))
    v = dm.net_forward(spec, params, x[:, None])[:, 0]
    g, _, fstar, _ = bound_terms(kind, v)
    return float(trapezoid(p.pdf(x) * g - q.pdf(x) * fstar, x))


def variational_estimate(p, q, kind, config: EstimatorConfig | None = None):
    """Train the variational function and return ``(estimate, curve)``.

    ``estimate`` is the minibatch bound averaged over the finite values among
    the last 10% of steps.
    Each curve row holds ``step``, the minibatch bound ``batch_objective``
    (evaluated before that step's update), ``population_objective`` for the
    network after the update, and ``event``.  Conjugate overflows are logged
    as events and the step is skipped.
    """
    config = config or EstimatorConfig()
    kind = DivergenceKind.parse(kind)
    rng = np.random.default_rng(config.seed)
    spec = config.net
    params = dm.init_params(spec, rng)
    opt = dm.AdamState.zeros(spec.param_count, config.lr)
    curve = []
    b = config.batch_size
    for step in range(config.steps):
        xp = p.sample(rng, b)[:, None]
        xq = q.sample(rng, b)[:, None]
        event = ""
        try:
            vp = dm.net_forward(spec, params, xp)[:, 0]
            vq = dm.net_forward(spec, params, xq)[:, 0]
            gp, gp1, _, _ = bound_terms(kind, vp)
            _, _, fq, fq1 = bound_terms(kind, vq)
            batch_obj = float(np.mean(gp) - np.mean(fq))
            grad_p, _ = dm.net_gradients(spec, params, xp, (gp1 / b)[:, None])
            grad_q, _ = dm.net_gradients(spec, params, xq, (fq1 / b)[:, None])
            grad, _, _ = clip_grad_norm(grad_q - grad_p, CLIP_NORM)
            opt, params = dm.adam_step(opt, params, grad)
        except StabilityError as exc:
            batch_obj = float("nan")
            event = exc.event
        try:
            pop = population_bound(spec, params, p, q, kind, config.eval_grid)
        except StabilityError as exc:
            pop = float("nan")
            event = event or exc.event
        curve.append({"step": step, "batch_objective": batch_obj, "population_objective": pop, "event": event})
    tail = np.array([row["batch_objective"] for row in curve[-max(1, config.steps // 10) :]])
    tail = tail[np.isfinite(tail)]
    # NaN when every step in the window overflowed
    return (float(tail.mean()) if tail.size else float("nan")), curve
