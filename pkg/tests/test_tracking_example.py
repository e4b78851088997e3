"""Two-player tracking game: closed form, cross-check against the generic pipeline, sweeps."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lqmkv.errors import ConfigError
from lqmkv.tracking_example import (
    DEFAULT_PARAMS,
    SWEEP_COLUMNS,
    TrackingParams,
    build_game,
    closed_form,
    cross_check,
    sweep,
)

from conftest import A_SYM, ETA_SYM, K_SYM, LAM_SYM, PI_SYM, PI_HAT_SYM, RATE_SYM, VAR_SYM


class TestClosedForm:
    def test_frozen_values(self):
        cf = closed_form(DEFAULT_PARAMS)
        np.testing.assert_allclose(cf.K, [K_SYM, K_SYM], atol=1e-14)
        np.testing.assert_allclose(cf.Lam, [LAM_SYM, LAM_SYM], atol=1e-14)
        np.testing.assert_allclose(cf.pi, [PI_SYM, PI_SYM], atol=1e-14)
        np.testing.assert_allclose(cf.pi_tilde, [PI_HAT_SYM, PI_HAT_SYM], atol=1e-14)
        np.testing.assert_allclose(cf.eta_bar, ETA_SYM, atol=1e-13)
        np.testing.assert_allclose(cf.A, [A_SYM, A_SYM], atol=1e-14)
        assert cf.a == pytest.approx(RATE_SYM, abs=1e-14)
        assert cf.a_tilde == pytest.approx(RATE_SYM, abs=1e-14)
        assert cf.xbar_inf == pytest.approx(5.0, abs=1e-12)
        assert cf.stationary_variance == pytest.approx(VAR_SYM, abs=1e-14)

    def test_mean_path(self):
        cf = closed_form(DEFAULT_PARAMS)
        t = np.array([0.0, 1.0, 50.0])
        np.testing.assert_allclose(cf.mean_path(t), 5.0 * (1.0 - np.exp(-RATE_SYM * t)), atol=1e-12)

    def test_riccati_roots_solve_their_quadratics(self):
        p = TrackingParams(lam=(2.0, 0.5), delta=(1.5, 3.0), theta=(0.2, 1.0), xi=(0.7, 2.0), b=(1.0, 1.3))
        cf = closed_form(p)
        for i in range(2):
            assert cf.P[i] * cf.K[i] ** 2 + p.rho * cf.K[i] - (p.lam[i] + p.delta[i]) == pytest.approx(0.0, abs=1e-12)
            assert cf.P_tilde[i] * cf.Lam[i] ** 2 + p.rho * cf.Lam[i] - p.delta[i] == pytest.approx(0.0, abs=1e-12)

    def test_symmetric_and_bracketing_routes_agree(self):
        # A tiny asymmetry switches to the bracketing solver; the answer must be continuous.
        sym = closed_form(DEFAULT_PARAMS)
        near = closed_form(TrackingParams(b=(1.0, 1.0 + 1e-9)))
        np.testing.assert_allclose(near.pi, sym.pi, atol=1e-8)
        assert near.a == pytest.approx(sym.a, abs=1e-8)


class TestCrossCheck:
    @pytest.mark.parametrize(
        "params",
        [
            DEFAULT_PARAMS,
            TrackingParams(lam=(0.0, 0.0)),
            TrackingParams(b=(1.0, 2.0)),
            TrackingParams(lam=(3.0, 0.5), delta=(2.0, 1.0), theta=(0.5, 0.0), xi=(1.0, 0.4), targets=(-2.0, 4.0), rho=1.5),
        ],
        ids=["default", "no-herding", "asymmetric-b", "asymmetric-all"],
    )
    def test_pipeline_matches_closed_form(self, params):
        rep = cross_check(params)
        assert rep.passed, rep.deltas

    @settings(max_examples=4, deadline=None)
    @given(st.floats(0.0, 5.0), st.floats(0.1, 3.0), st.floats(0.2, 2.0), st.floats(0.5, 4.0))
    def test_random_symmetric_games(self, lam, delta, xi, rho):
        p = TrackingParams(lam=(lam, lam), delta=(delta, delta), xi=(xi, xi), rho=rho)
        assert cross_check(p).passed


class TestSweep:
    def test_herding_shrinks_variance(self):
        rows = sweep(DEFAULT_PARAMS, "lambda", [0.0, 10.0, 100.0, 500.0], (0, 1))
        var = [r["stationary_variance"] for r in rows]
        assert all(u > v for u, v in zip(var, var[1:]))
        for r in rows:
            assert r["stationary_variance"] == pytest.approx(DEFAULT_PARAMS.sigma**2 / (2.0 * r["a"]), rel=1e-14)
            assert r["xbar_inf"] == pytest.approx(5.0, abs=1e-9)

    def test_rows_have_every_column(self):
        rows = sweep(DEFAULT_PARAMS, "xi", [0.5, 1.0], (0,))
        assert all(set(r) == set(SWEEP_COLUMNS) for r in rows)
        assert all(r["error"] == "" for r in rows)

    def test_invalid_value_is_recorded(self):
        rows = sweep(DEFAULT_PARAMS, "xi", [-1.0, 1.0], (0,))
        assert rows[0]["error"] and math.isnan(rows[0]["a"])
        assert rows[1]["error"] == ""

    def test_unknown_parameter(self):
        with pytest.raises(ConfigError):
            DEFAULT_PARAMS.with_value("rho", 1.0)


class TestParams:
    @pytest.mark.parametrize(
        "bad",
        [dict(lam=(1.0,)), dict(lam=(-1.0, 1.0)), dict(xi=(0.0, 1.0)), dict(theta=(-2.0, 0.0), xi=(1.0, 1.0)),
         dict(rho=0.0), dict(x0_var=-1.0)],
    )
    def test_rejects_bad_values(self, bad):
        with pytest.raises(ConfigError):
            TrackingParams(**bad)

    def test_game_coefficients(self):
        g = build_game(TrackingParams(lam=(2.0, 1.0), delta=(3.0, 1.0), targets=(1.0, 4.0)))
        assert g.is_infinite and g.n == 2 and g.d == 1
