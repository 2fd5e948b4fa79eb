import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad, trapezoid
from scipy.stats import norm

from fvim import diffmath as dm
from fvim import estimate as est
from fvim.fdiv import LOG4

from conftest import KINDS

P = est.Gaussian1D(0.0, 1.0)
Q = est.Gaussian1D(1.0, 1.0)
FAST = dict(net=dm.NetSpec(1, (16, 16), 1), batch_size=512)


class TestSources:
    def test_gaussian_matches_scipy(self):
        g = est.Gaussian1D(0.3, 1.7)
        x = np.linspace(-5, 5, 11)
        np.testing.assert_allclose(g.pdf(x), norm.pdf(x, 0.3, 1.7), rtol=1e-13)
        np.testing.assert_allclose(g.cdf(x), norm.cdf(x, 0.3, 1.7), rtol=1e-13)

    def test_mixture_normalized(self):
        m = est.GaussianMixture1D((0.3, 0.7), (-1.0, 2.0), (0.5, 1.0))
        total, _ = quad(m.pdf, -20, 20)
        np.testing.assert_allclose(total, 1.0, rtol=1e-10)
        np.testing.assert_allclose(m.cdf(40.0), 1.0)

    def test_sample_moments(self, rng):
        m = est.GaussianMixture1D((0.5, 0.5), (-2.0, 2.0), (1.0, 1.0))
        x = m.sample(rng, 200_000)
        np.testing.assert_allclose(x.mean(), 0.0, atol=0.02)
        np.testing.assert_allclose(x.var(), 5.0, rtol=0.02)

    def test_validation(self):
        with pytest.raises(ValueError):
            est.Gaussian1D(0.0, 0.0)
        with pytest.raises(ValueError):
            est.GaussianMixture1D((0.5, 0.6), (0.0, 1.0), (1.0, 1.0))


class TestQuadrature:
    @given(m1=st.floats(-2, 2), m2=st.floats(-2, 2), s1=st.floats(0.5, 2), s2=st.floats(0.5, 2))
    def test_closed_form_kl_agrees(self, m1, m2, s1, s2):
        p, q = est.Gaussian1D(m1, s1), est.Gaussian1D(m2, s2)
        # std-2 sources need more room than the default grid
        assert abs(est.closed_form_kl(p, q) - est.numeric_fdiv(p, q, "kl", grid=(-20, 20, 200_001))) < 1e-5

    def test_known_values(self):
        np.testing.assert_allclose(est.closed_form_kl(P, Q), 0.5)
        np.testing.assert_allclose(est.numeric_fdiv(P, Q, "tv"), 2 * norm.cdf(0.5) - 1, atol=1e-9)
        # equal-variance Gaussians: reverse KL equals forward KL
        np.testing.assert_allclose(est.numeric_fdiv(P, Q, "rkl"), 0.5, atol=1e-9)

    @pytest.mark.parametrize("kind", KINDS)
    def test_identity_value(self, kind):
        expected = -LOG4 if kind == "gan" else 0.0
        np.testing.assert_allclose(est.numeric_fdiv(P, P, kind), expected, atol=1e-9)

    def test_coverage_error(self):
        with pytest.raises(est.InsufficientCoverageError):
            est.numeric_fdiv(P, est.Gaussian1D(8.0, 1.0), "kl")

    def test_grid_too_coarse(self):
        with pytest.raises(ValueError):
            est.numeric_fdiv(P, Q, "kl", grid=(-10, 10, 100))


class TestVariational:
    def test_curve_shape_and_seeding(self):
        cfg = est.EstimatorConfig(steps=50, **FAST)
        a, ca = est.variational_estimate(P, Q, "kl", cfg)
        b, cb = est.variational_estimate(P, Q, "kl", cfg)
        assert len(ca) == 50 and a == b and ca == cb
        assert set(ca[0]) == {"step", "batch_objective", "population_objective", "event"}

    @pytest.mark.parametrize("kind", KINDS)
    def test_identity_converges(self, kind):
        value, _ = est.variational_estimate(P, P, kind, est.EstimatorConfig(steps=2000, **FAST))
        expected = -LOG4 if kind == "gan" else 0.0
        assert abs(value - expected) <= 0.02

    @pytest.mark.parametrize("kind", KINDS)
    def test_population_bound_stays_below_truth(self, kind):
        _, curve = est.variational_estimate(P, Q, kind, est.EstimatorConfig(steps=400, **FAST))
        truth = est.numeric_fdiv(P, Q, kind)
        assert max(r["population_objective"] for r in curve) <= truth + 0.05

    def test_population_bound_of_optimal_critic(self):
        """With V set to the optimal KL critic 1 + log(p/q) the bound is the divergence."""
        x = np.linspace(-10, 10, 20001)
        v = 1.0 + np.log(P.pdf(x) / Q.pdf(x))
        g, _, fstar, _ = est.bound_terms("kl", v)
        bound = trapezoid(P.pdf(x) * g - Q.pdf(x) * fstar, x)
        np.testing.assert_allclose(bound, 0.5, atol=1e-8)

    def test_overflow_is_recorded_and_run_continues(self):
        cfg = est.EstimatorConfig(steps=40, lr=30.0, batch_size=64)
        value, curve = est.variational_estimate(P, Q, "kl", cfg)
        events = [r["event"] for r in curve]
        assert len(curve) == 40 and "overflow" in events
        # a diverged critic stays diverged, so the whole averaging window is empty
        assert math.isnan(value)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            est.EstimatorConfig(net=dm.NetSpec(2, (4,), 1))
        with pytest.raises(ValueError):
            est.EstimatorConfig(steps=0)
