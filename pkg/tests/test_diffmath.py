import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fvim import diffmath as dm
from fvim.errors import NonFiniteGradientError


def small_net(rng, input_dim=3, hidden=(5, 4), output_dim=1):
    spec = dm.NetSpec(input_dim, hidden, output_dim)
    return spec, dm.init_params(spec, rng)


class TestNetSpec:
    def test_param_count(self):
        spec = dm.NetSpec(3, (5, 4), 2)
        assert spec.param_count == 3 * 5 + 5 + 5 * 4 + 4 + 4 * 2 + 2
        assert spec.layer_shapes == [(5, 3), (4, 5), (2, 4)]

    def test_init_within_fan_in_bound(self, rng):
        spec, params = small_net(rng)
        for (w, b), (fan_out, fan_in) in zip(dm.unpack(spec, params), spec.layer_shapes):
            bound = 1.0 / np.sqrt(fan_in)
            assert np.all(np.abs(w) <= bound) and np.all(np.abs(b) <= bound)

    @given(seed=st.integers(0, 2**31))
    def test_init_is_seeded(self, seed):
        spec = dm.NetSpec(2, (3,), 1)
        a = dm.init_params(spec, np.random.default_rng(seed))
        b = dm.init_params(spec, np.random.default_rng(seed))
        np.testing.assert_array_equal(a, b)

    def test_forward_single_and_batch_agree(self, rng):
        spec, params = small_net(rng, output_dim=2)
        x = rng.normal(size=(4, 3))
        batch = dm.net_forward(spec, params, x)
        assert batch.shape == (4, 2)
        np.testing.assert_allclose(dm.net_forward(spec, params, x[1]), batch[1])

    def test_wrong_input_width(self, rng):
        spec, params = small_net(rng)
        with pytest.raises(ValueError):
            dm.net_forward(spec, params, np.zeros((2, 4)))


class TestGradients:
    def test_param_gradients_mse(self, rng):
        for _ in range(5):
            spec, params = small_net(rng, output_dim=2)
            x = rng.normal(size=(6, 3))
            y = rng.normal(size=(6, 2))

            def loss(out):
                return float(np.mean((out - y) ** 2)), 2.0 * (out - y) / out.size

            assert dm.finite_diff_check(spec, params, x, loss) < 1e-6

    def test_input_gradients(self, rng):
        spec, params = small_net(rng)
        x = rng.normal(size=(5, 3))
        _, gx = dm.net_gradients(spec, params, x, np.ones((5, 1)))
        h = 1e-6
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            fd = (dm.net_forward(spec, params, x + e) - dm.net_forward(spec, params, x - e))[:, 0] / (2 * h)
            np.testing.assert_allclose(gx[:, j], fd, rtol=1e-6, atol=1e-9)

    def test_per_sample_grads_sum_to_batch(self, rng):
        spec, params = small_net(rng)
        x = rng.normal(size=(7, 3))
        out, per, gx = dm.forward_and_scalar_grads(spec, params, x)
        total, gx2 = dm.net_gradients(spec, params, x, np.ones((7, 1)))
        np.testing.assert_allclose(per.sum(axis=0), total, atol=1e-12)
        np.testing.assert_allclose(gx, gx2, atol=1e-12)
        np.testing.assert_allclose(out, dm.net_forward(spec, params, x)[:, 0])

    @pytest.mark.parametrize("which", ["param", "input", "both"])
    def test_param_grad_jvp_matches_differences(self, rng, which):
        spec, params = small_net(rng)
        x = rng.normal(size=(4, 3))
        P = rng.normal(size=(4, spec.param_count)) if which in ("param", "both") else None
        U = rng.normal(size=(4, 3)) if which in ("input", "both") else None
        jvp = dm.param_grad_jvp(spec, params, x, P, U)
        h = 1e-6
        for n in range(4):
            dp = P[n] if P is not None else 0.0
            du = U[n] if U is not None else 0.0
            up = dm.forward_and_scalar_grads(spec, params + h * dp, x[n : n + 1] + h * du)[1][0]
            dn = dm.forward_and_scalar_grads(spec, params - h * dp, x[n : n + 1] - h * du)[1][0]
            np.testing.assert_allclose(jvp[n], (up - dn) / (2 * h), rtol=1e-5, atol=1e-8)

    def test_weighted_jvp_is_weighted_sum(self, rng):
        spec, params = small_net(rng)
        x = rng.normal(size=(6, 3))
        P, U, w = rng.normal(size=(6, spec.param_count)), rng.normal(size=(6, 3)), rng.normal(size=6)
        full = dm.param_grad_jvp(spec, params, x, P, U)
        np.testing.assert_allclose(dm.param_grad_jvp(spec, params, x, P, U, weights=w), w @ full, atol=1e-12)

    def test_max_relative_error_flags_wrong_gradient(self, rng):
        params = rng.normal(size=4)
        assert dm.max_relative_error(lambda p: float(p @ p), params, 2 * params) < 1e-8
        assert dm.max_relative_error(lambda p: float(p @ p), params, 3 * params) > 0.1


class TestAdam:
    def test_first_step_moves_by_lr(self):
        state = dm.AdamState.zeros(3, learning_rate=0.1)
        g = np.array([1.0, -2.0, 0.5])
        state, p = dm.adam_step(state, np.zeros(3), g)
        # bias correction makes the first step lr * sign(g) up to epsilon
        np.testing.assert_allclose(p, -0.1 * np.sign(g), rtol=1e-6)
        assert state.step_count == 1

    def test_matches_reference_recursion(self, rng):
        state = dm.AdamState.zeros(5, learning_rate=1e-2)
        p = rng.normal(size=5)
        m = v = np.zeros(5)
        ref = p.copy()
        for t in range(1, 6):
            g = rng.normal(size=5)
            state, p = dm.adam_step(state, p, g)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            ref = ref - 1e-2 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        np.testing.assert_allclose(p, ref, rtol=1e-12)

    def test_nonfinite_gradient_raises(self):
        state = dm.AdamState.zeros(2)
        with pytest.raises(NonFiniteGradientError) as info:
            dm.adam_step(state, np.zeros(2), np.array([np.nan, 1.0]), {"where": "test"})
        assert info.value.event == "nonfinite_grad"
        assert info.value.context["where"] == "test"

    def test_bad_betas(self):
        with pytest.raises(ValueError):
            dm.AdamState.zeros(2, beta1=1.0)


class TestCheckpoint:
    def test_round_trip(self, rng, tmp_path):
        spec, params = small_net(rng)
        path = tmp_path / "net.ckpt"
        dm.write_checkpoint(path, [
            dm.CheckpointRecord("policy", spec, params, {"env_id": "x"}),
            dm.CheckpointRecord("log_std", None, np.array([-0.5, 0.25])),
        ])
        records = dm.read_checkpoint(path)
        assert records["policy"].spec == spec
        assert records["policy"].extra["env_id"] == "x"
        np.testing.assert_array_equal(records["policy"].params, params)
        np.testing.assert_array_equal(records["log_std"].params, [-0.5, 0.25])
        assert records["log_std"].spec is None

    def test_truncated_file(self, rng, tmp_path):
        spec, params = small_net(rng)
        path = tmp_path / "net.ckpt"
        dm.write_checkpoint(path, [dm.CheckpointRecord("policy", spec, params)])
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError, match="truncated"):
            dm.read_checkpoint(path)
