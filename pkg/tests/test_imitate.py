from dataclasses import replace

import numpy as np
import pytest

from fvim import imitate as im
from fvim import policy_opt as po
from fvim.adversary import PairMode, RegConfig
from fvim.envsim import POINTMASS, make_env
from fvim.errors import ConjugateOverflowError, ModeError

PM = make_env(POINTMASS)
TINY = im.TrainerConfig(n_iterations=2, steps_per_iteration=200, disc_epochs=1, hidden=(8, 8), eval_episodes=2,
                        final_eval_episodes=2, ppo=po.PPOConfig(ppo_epochs=1))


@pytest.fixture(scope="module")
def demos():
    expert = po.make_policy(PM.obs_dim, PM.act_dim, np.random.default_rng(0), hidden=(8, 8))
    return im.generate_demos(expert, PM, 6, seed=1)


class TestDemos:
    def test_generate(self, demos):
        assert len(demos) == 6 and demos.mode is PairMode.STATE_ACTION
        t = demos.trajectories[0]
        assert t.states.shape == (100, 4) and t.actions.shape == (100, 2)
        assert all(np.all(np.abs(tr.actions) <= 1.0) for tr in demos.trajectories)
        assert demos.pairs().shape == (600, 6)

    def test_generate_is_seeded(self):
        expert = po.make_policy(4, 2, np.random.default_rng(0), hidden=(8, 8))
        a, b = im.generate_demos(expert, PM, 2, 5), im.generate_demos(expert, PM, 2, 5)
        np.testing.assert_array_equal(a.pairs(), b.pairs())

    def test_demo_returns_replay(self, demos):
        ret = im.demo_returns(demos)
        assert ret.shape == (6,) and np.all(ret < 0)

    def test_strip_actions(self, demos):
        obs = im.strip_actions(demos)
        assert obs.mode is PairMode.STATE_TRANSITION
        assert obs.pairs().shape == (6 * 99, 8)
        np.testing.assert_array_equal(obs.pairs()[0], np.concatenate([demos.trajectories[0].states[0],
                                                                      demos.trajectories[0].states[1]]))
        with pytest.raises(ModeError):
            im.strip_actions(obs)
        with pytest.raises(ModeError):
            im.demo_returns(obs)

    def test_inconsistent_mode(self, demos):
        with pytest.raises(ModeError):
            im.DemoDataset(PM.env_id, PairMode.STATE_TRANSITION, demos.trajectories, 0)

    def test_subsample(self, demos):
        sub = im.subsample(demos, 3, seed=2)
        idx = [next(i for i, t in enumerate(demos.trajectories) if t is s) for s in sub.trajectories]
        assert idx == sorted(idx) and len(set(idx)) == 3
        with pytest.raises(ValueError):
            im.subsample(demos, 7, 0)

    def test_derive_seed(self):
        assert im.derive_seed(3, "a", 1) == im.derive_seed(3, "a", 1)
        assert im.derive_seed(3, "a", 1) != im.derive_seed(3, "a", 2)
        assert im.derive_seed(3, "a") != im.derive_seed(4, "a")


class TestTrainer:
    def test_mode_enforced(self, demos):
        with pytest.raises(ModeError):
            im.train_fvimo(PM, demos, TINY)
        with pytest.raises(ModeError):
            im.train_fvim(PM, im.strip_actions(demos), TINY)

    def test_zero_iterations(self, demos):
        res = im.train_fvim(PM, demos, replace(TINY, n_iterations=0))
        assert res.curve == [] and res.events == []
        init = po.make_policy(4, 2, np.random.default_rng(np.random.SeedSequence(TINY.seed).spawn(4)[0]), (8, 8))
        np.testing.assert_array_equal(res.policy.params, init.params)

    @pytest.mark.parametrize("obs_only", [False, True])
    def test_curve_schema_and_reproducibility(self, demos, obs_only):
        data = im.strip_actions(demos) if obs_only else demos
        cfg = replace(TINY, reg=RegConfig(psi=10.0, penalty_mode="input")) if obs_only else TINY
        a, b = im.train(PM, data, cfg), im.train(PM, data, cfg)
        assert [tuple(r) for r in a.curve] == [im.CURVE_COLUMNS] * 2
        assert [r["env_steps"] for r in a.curve] == [200, 400]
        assert a.curve == b.curve
        assert a.final_mean_return == b.final_mean_return
        assert all(0 < r["mean_adv_reward"] < 1 for r in a.curve)

    def test_reward_firewall(self, demos, monkeypatch):
        calls = []
        real = im.collect_rollout

        def spy(policy, spec, n, rng, step_fn=None):
            calls.append(step_fn)
            return real(policy, spec, n, rng, step_fn=step_fn)

        monkeypatch.setattr(im, "collect_rollout", spy)
        im.train_fvim(PM, demos, TINY)
        assert calls and all(isinstance(getattr(f, "__self__", None), im.RewardFreeEnv) for f in calls)

    def test_stability_event_ends_run_gracefully(self, demos, monkeypatch):
        real = im.adv.reward_batch
        count = {"n": 0}

        def flaky(*args):
            count["n"] += 1
            if count["n"] == 2:
                raise ConjugateOverflowError("boom", kind="kl")
            return real(*args)

        monkeypatch.setattr(im.adv, "reward_batch", flaky)
        res = im.train_fvim(PM, demos, replace(TINY, n_iterations=5))
        assert len(res.curve) == 2
        assert res.curve[-1]["stability_event"] == "overflow"
        assert res.events[0].iteration == 1 and res.events[0].event == "overflow"
        assert np.isfinite(res.final_mean_return)

    def test_gail_configuration_runs(self, demos):
        res = im.train_fvim(PM, demos, replace(TINY, kind="gan", variant="original"))
        assert all(r["mean_adv_reward"] > 0 for r in res.curve)


class TestDemoSweep:
    def test_single_count_matches_direct_run(self, demos):
        rows = im.demo_sweep(PM, demos, TINY, counts=(4,))
        seed = im.demo_count_seed(TINY.seed, 4)
        direct = im.train(PM, im.subsample(demos, 4, seed), replace(TINY, seed=seed, n_demos=4))
        assert rows[0]["final_mean_return"] == direct.final_mean_return
        assert tuple(rows[0]) == im.SWEEP_COLUMNS

    def test_bookkeeping_and_failures(self, demos, monkeypatch):
        real = im.train

        def train(spec, data, cfg, callback=None):
            if cfg.n_demos == 2:
                raise FloatingPointError("cell failed")
            return real(spec, data, cfg, callback)

        monkeypatch.setattr(im, "train", train)
        rows = im.demo_sweep(PM, demos, TINY, counts=(1, 2, 3))
        assert [r["n_demos"] for r in rows] == [1, 2, 3]
        assert rows[1]["stability_event"] == "FloatingPointError" and rows[1]["env_steps"] == 0
        assert sum(r["env_steps"] for r in rows) == 2 * TINY.n_iterations * 200

    def test_too_many_demos(self, demos):
        with pytest.raises(ValueError):
            im.demo_sweep(PM, demos, TINY, counts=(1, 7))


class TestConfig:
    def test_parsing(self):
        cfg = im.TrainerConfig(kind="KL", variant="swapped")
        assert cfg.kind.value == "kl" and cfg.variant.value == "swapped"
        with pytest.raises(ValueError):
            im.TrainerConfig(n_iterations=-1)
