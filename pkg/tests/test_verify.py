"""Certification: analytic drift, best-response gaps, martingale and deviation checks, oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lqmkv.equilibrium import OverrideProfile, analytic_cost, solve_nash
from lqmkv.errors import ConfigError
from lqmkv.simulate import SimConfig
from lqmkv.verify import (
    DRIFT_TOL,
    RunningMoments,
    candidate_drift,
    deviation_test,
    epsilon_fit,
    equilibrium_drift,
    martingale_check,
    oracle_deterministic,
    random_perturbations,
    verify_equilibrium,
)

from conftest import random_deterministic_game


class TestRunningMoments:
    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(1, 40), min_size=1, max_size=6), st.integers(0, 1000))
    def test_block_merge_equals_batch(self, sizes, seed):
        x = np.random.default_rng(seed).normal(3.0, 2.0, size=(sum(sizes), 3))
        acc = RunningMoments()
        start = 0
        for s in sizes:
            acc.add(x[start : start + s])
            start += s
        np.testing.assert_allclose(acc.mean, x.mean(axis=0), rtol=1e-12)
        if x.shape[0] > 1:
            np.testing.assert_allclose(acc.se, x.std(axis=0, ddof=1) / np.sqrt(x.shape[0]), rtol=1e-10)


class TestAnalyticDrift:
    @pytest.mark.parametrize("i", [0, 1])
    def test_equilibrium_drift_vanishes(self, tracking_law, i):
        s = equilibrium_drift(tracking_law, i)
        assert s.max_abs <= DRIFT_TOL
        assert s.route_mismatch <= 1e-10

    def test_finite_horizon_drift_vanishes(self, finite_law):
        for i in range(2):
            assert equilibrium_drift(finite_law, i).max_abs <= DRIFT_TOL

    def test_constant_offset_costs_square_form(self, tracking_game, tracking_law):
        # Before the own mean moves, a constant offset e costs exactly e^2 S^ (S^ = 1 here).
        eps = 0.1
        s = equilibrium_drift(tracking_law, 0, tracking_law.player(0).perturbed(dc=eps))
        assert s.drift[0] == pytest.approx(eps**2, rel=1e-9)
        assert s.min >= eps**2 * (1.0 - 1e-9)
        assert s.route_mismatch <= 1e-10

    @settings(max_examples=5, deadline=None)
    @given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-0.3, 0.3))
    def test_gap_equals_cost_excess(self, finite_game, finite_law, dA, dAh, dc, dAr):
        dev = finite_law.player(1).perturbed(dA, dAh, dc, dA_ref=dAr)
        s = equilibrium_drift(finite_law, 1, dev)
        excess = analytic_cost(finite_game, 1, finite_law, own=dev) - analytic_cost(finite_game, 1, finite_law)
        assert s.min >= -DRIFT_TOL
        assert s.gap == pytest.approx(excess, rel=1e-6, abs=1e-10)
        assert s.route_mismatch <= 1e-9

    def test_candidate_check(self, tracking_game, tracking_law):
        assert candidate_drift(tracking_game, tracking_law, 0, tracking_law.rs).max_abs <= DRIFT_TOL
        bad = OverrideProfile(tracking_law, tracking_law.player(1).perturbed(dA=-0.2))
        s = candidate_drift(tracking_game, bad, 1, tracking_law.rs)
        assert s.max_abs > DRIFT_TOL and s.gap > 0.0

    def test_deviation_for_wrong_player(self, tracking_law):
        with pytest.raises(ConfigError):
            equilibrium_drift(tracking_law, 0, tracking_law.player(1))


class TestMonteCarlo:
    def test_martingale_flat_at_equilibrium(self, finite_law):
        cfg = SimConfig(n_paths=4096, n_steps=400, t_end=1.0, seed=5, record_every=40)
        s = martingale_check(finite_law, 0, cfg)
        assert s.flat
        assert s.mean_S0 == pytest.approx(s.value, abs=3.0 * s.se_S0 + 1e-12)

    def test_martingale_grows_under_perturbation(self, finite_law):
        cfg = SimConfig(n_paths=4096, n_steps=400, t_end=1.0, seed=5, record_every=40)
        s = martingale_check(finite_law, 0, cfg, finite_law.player(0).perturbed(dc=0.5))
        assert s.monotonicity_violations == 0
        inc, se = s.end_increase
        assert inc > 3.0 * se

    def test_offset_deviations_cost_more(self, finite_game, finite_law):
        cfg = SimConfig(n_paths=4096, n_steps=400, t_end=1.0, seed=2, cost_rule="trapezoid")
        devs = [(f"offset{e:+g}", finite_law.player(0).perturbed(dc=e)) for e in (-0.2, 0.2)]
        for r in deviation_test(finite_law, 0, devs, cfg):
            assert r.passed and r.delta > 0.0
            assert abs(r.delta - r.analytic) <= 3.0 * r.se + 1e-3

    def test_constant_offset_family_is_quadratic(self, tracking_law):
        cfg = SimConfig(n_paths=4096, n_steps=1000, t_end=5.0, seed=3, cost_rule="trapezoid")
        fit = epsilon_fit(tracking_law, 0, cfg)
        assert np.all(fit.delta >= -3.0 * fit.se)
        assert fit.r2 >= 0.99
        assert fit.coef[2] > 0.0

    def test_richardson_needs_even_steps(self, tracking_law):
        with pytest.raises(ConfigError):
            epsilon_fit(tracking_law, 0, SimConfig(n_paths=16, n_steps=11, t_end=1.0), richardson=True)

    def test_random_perturbations_are_reproducible(self, tracking_game, tracking_law):
        a = random_perturbations(tracking_game, tracking_law, 0, seed=4)
        b = random_perturbations(tracking_game, tracking_law, 0, seed=4)
        assert len(a) == 5
        for u, v in zip(a, b):
            for x, y in zip(u.gains(0.0), v.gains(0.0)):
                np.testing.assert_array_equal(x, y)


class TestOracle:
    @pytest.mark.parametrize("seed", [0, 1])
    def test_random_deterministic_games(self, seed):
        game = random_deterministic_game(np.random.default_rng(seed))
        rep = oracle_deterministic(solve_nash(game))
        assert rep.passed, rep.max_deviation

    def test_requires_deterministic_finite_game(self, tracking_law, finite_law):
        with pytest.raises(ConfigError):
            oracle_deterministic(tracking_law)
        with pytest.raises(ConfigError):
            oracle_deterministic(finite_law)


class TestReport:
    def test_analytic_report_passes(self, tracking_law):
        rep = verify_equilibrium(tracking_law)
        assert rep.passed, rep.failures()
        assert rep.summary()["passed"] is True

    def test_perturbed_candidate_fails(self, tracking_law):
        bad = OverrideProfile(tracking_law, tracking_law.player(0).perturbed(dc=0.3))
        rep = verify_equilibrium(tracking_law, candidate=bad)
        assert not rep.passed
        assert any("candidate drift" in f for f in rep.failures())
