"""Euler-Maruyama simulator: reproducibility, noise layout, moments and costs."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lqmkv.equilibrium import StaticProfile, analytic_cost, moment_path, value
from lqmkv.errors import ConfigError, SimulationError
from lqmkv.simulate import BLOCK_SIZE, SimConfig, estimate_cost, simulate

from conftest import scalar_game

SMALL = dict(n_paths=2000, n_steps=200, t_end=1.0)


class TestConfig:
    @pytest.mark.parametrize(
        "bad",
        [dict(n_paths=1), dict(n_steps=0), dict(t_end=0.0), dict(t_end=math.inf), dict(mean_mode="exact"),
         dict(record_every=0), dict(cost_rule="simpson"), dict(substeps=0)],
    )
    def test_rejects_bad_values(self, bad):
        with pytest.raises(ConfigError):
            SimConfig(**bad)

    def test_recorded_steps_include_end(self):
        cfg = SimConfig(n_steps=10, record_every=4)
        np.testing.assert_array_equal(cfg.record_steps(), [0, 4, 8, 10])

    def test_t_end_beyond_horizon(self, finite_game, finite_law):
        with pytest.raises(ConfigError):
            simulate(finite_game, finite_law, SimConfig(n_paths=10, n_steps=10, t_end=2.0))


class TestReproducibility:
    def test_same_seed_same_bits(self, tracking_game, tracking_law):
        cfg = SimConfig(seed=7, **SMALL)
        a, b = simulate(tracking_game, tracking_law, cfg), simulate(tracking_game, tracking_law, cfg)
        assert a.states.tobytes() == b.states.tobytes()
        assert a.costs.tobytes() == b.costs.tobytes()

    def test_different_seed_different_paths(self, tracking_game, tracking_law):
        a = simulate(tracking_game, tracking_law, SimConfig(seed=1, **SMALL))
        b = simulate(tracking_game, tracking_law, SimConfig(seed=2, **SMALL))
        assert not np.array_equal(a.states, b.states)

    def test_thread_count_does_not_change_results(self, monkeypatch, tracking_game, tracking_law):
        cfg = SimConfig(n_paths=3 * BLOCK_SIZE, n_steps=20, t_end=0.5, seed=3)
        monkeypatch.setenv("LQMKV_THREADS", "1")
        a = simulate(tracking_game, tracking_law, cfg)
        monkeypatch.setenv("LQMKV_THREADS", "3")
        b = simulate(tracking_game, tracking_law, cfg)
        assert a.states.tobytes() == b.states.tobytes()

    @settings(max_examples=10, deadline=None)
    @given(st.integers(2, 2 * BLOCK_SIZE), st.integers(0, 2**32))
    def test_paths_do_not_depend_on_ensemble_size(self, n, seed):
        game = scalar_game(horizon=1.0, x0_var=1.0)
        law = StaticProfile(game, np.full((2, 1), -0.5), np.full((2, 1), -0.5), np.zeros(2))
        big = simulate(game, law, SimConfig(n_paths=2 * BLOCK_SIZE + 5, n_steps=5, t_end=1.0, seed=seed))
        small = simulate(game, law, SimConfig(n_paths=n, n_steps=5, t_end=1.0, seed=seed))
        np.testing.assert_array_equal(small.states, big.states[:n])

    def test_substeps_share_the_brownian_path(self):
        # Without control or drift X_T = X_0 + sigma W_T for any step size.
        game = scalar_game(horizon=1.0, x0_var=1.0)
        law = StaticProfile.zero(game)
        fine = simulate(game, law, SimConfig(n_paths=500, n_steps=40, t_end=1.0, seed=5))
        coarse = simulate(game, law, SimConfig(n_paths=500, n_steps=10, t_end=1.0, seed=5, substeps=4))
        np.testing.assert_allclose(coarse.states[:, -1], fine.states[:, -1], atol=1e-12)


class TestDynamics:
    def test_noiseless_paths_follow_the_mean_ode(self):
        game = scalar_game(horizon=1.0, sigma=0.0, x0=3.0)
        law = StaticProfile(game, np.full((2, 1), -0.7), np.full((2, 1), -0.4), np.array([0.5, 1.0]))
        cfg = SimConfig(n_paths=16, n_steps=1000, t_end=1.0)
        ens = simulate(game, law, cfg)
        assert np.ptp(ens.states[:, -1, 0]) == 0.0
        mp = moment_path(game, law, np.linspace(0.0, 1.0, 1001))
        np.testing.assert_allclose(ens.states[0, :, 0], mp.m[:, 0], atol=5e-3)

    def test_particle_and_analytic_means_agree(self, tracking_game, tracking_law):
        cfg = dict(n_paths=20000, n_steps=100, t_end=2.0, seed=4, record_every=100)
        a = simulate(tracking_game, tracking_law, SimConfig(mean_mode="analytic", **cfg))
        p = simulate(tracking_game, tracking_law, SimConfig(mean_mode="particle", **cfg))
        se = a.states[:, -1, 0].std() / math.sqrt(cfg["n_paths"])
        assert abs(a.states[:, -1, 0].mean() - p.states[:, -1, 0].mean()) <= 3.0 * se

    def test_mc_mean_and_variance_match_moments(self, finite_game, finite_law):
        cfg = SimConfig(n_paths=20000, n_steps=500, t_end=1.0, seed=9, record_every=100)
        ens = simulate(finite_game, finite_law, cfg)
        mp = moment_path(finite_game, finite_law, np.linspace(0.0, 1.0, 501))
        x = ens.states[:, :, 0]
        se = x.std(axis=0) / math.sqrt(x.shape[0])
        m = mp.m[cfg.record_steps(), 0]
        assert np.all(np.abs(x.mean(axis=0) - m) <= 3.0 * se + 1e-12)
        v = mp.C[-1, 0, 0]
        assert x[:, -1].var() == pytest.approx(v, rel=0.05)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_blow_up_is_reported(self):
        game = scalar_game(horizon=1.0, x0_var=1.0)
        law = StaticProfile(game, np.full((2, 1), 1e150), np.zeros((2, 1)), np.zeros(2))
        with pytest.raises(SimulationError):
            simulate(game, law, SimConfig(n_paths=10, n_steps=50, t_end=1.0))


class TestCosts:
    def test_finite_horizon_cost_matches_value(self, finite_game, finite_law):
        cfg = SimConfig(n_paths=20000, n_steps=1000, t_end=1.0, seed=11, record_every=1000, cost_rule="trapezoid")
        ens = simulate(finite_game, finite_law, cfg)
        for i in range(2):
            mean, se = estimate_cost(ens, i)
            assert abs(mean - value(finite_game, i, finite_law)) <= 3.0 * se + 1e-3

    def test_left_and_trapezoid_rules_differ_by_order_dt(self, finite_game, finite_law):
        base = dict(n_paths=2000, n_steps=200, t_end=1.0, seed=2, record_every=200)
        left = simulate(finite_game, finite_law, SimConfig(**base)).costs
        trap = simulate(finite_game, finite_law, SimConfig(cost_rule="trapezoid", **base)).costs
        assert 0.0 < np.max(np.abs(left - trap)) < 50.0 * (1.0 / 200)

    def test_deviation_only_changes_own_cost_paths(self, finite_game, finite_law):
        cfg = SimConfig(n_paths=200, n_steps=50, t_end=1.0, seed=1)
        dev = finite_law.player(0).perturbed(dc=0.5)
        base = simulate(finite_game, finite_law, cfg)
        ens = simulate(finite_game, finite_law, cfg, dev)
        np.testing.assert_array_equal(ens.ref_states, base.states)
        np.testing.assert_array_equal(ens.total_costs(1), base.total_costs(1))
        assert not np.array_equal(ens.total_costs(0), base.total_costs(0))

    def test_deviation_cost_matches_analytic(self, finite_game, finite_law):
        cfg = SimConfig(n_paths=20000, n_steps=1000, t_end=1.0, seed=8, record_every=1000, cost_rule="trapezoid")
        dev = finite_law.player(1).perturbed(dA=0.3, dc=-0.2, dA_ref=0.2)
        mean, se = estimate_cost(simulate(finite_game, finite_law, cfg, dev), 1)
        assert abs(mean - analytic_cost(finite_game, 1, finite_law, own=dev)) <= 3.0 * se + 1e-3
