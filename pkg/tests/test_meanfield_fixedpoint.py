"""Stacked fixed-point layer: stationary values, quadratic closed form, residuals and limits."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lqmkv._numerics import make_grid
from lqmkv.meanfield_fixedpoint import (
    BlockCache,
    gain_A,
    solve_fixed_point,
    solve_pi_infinite,
)
from lqmkv.model import make_game
from lqmkv.riccati import solve_riccati

from conftest import ETA_SYM, PI_SYM, PI_HAT_SYM, scalar_game


@pytest.fixture(scope="module")
def tracking_fp(tracking_game):
    rs = solve_riccati(tracking_game)
    return rs, solve_fixed_point(tracking_game, rs)


class TestStationary:
    def test_frozen_values(self, tracking_fp):
        _, fp = tracking_fp
        np.testing.assert_allclose(fp.pi(0.0)[:, 0], [PI_SYM, PI_SYM], atol=1e-12)
        np.testing.assert_allclose(fp.pi_hat(0.0)[:, 0], [PI_HAT_SYM, PI_HAT_SYM], atol=1e-12)
        np.testing.assert_allclose(fp.eta(0.0), ETA_SYM, atol=1e-10)

    def test_quadratic_route_agrees_with_newton(self, tracking_game, tracking_fp):
        rs, fp = tracking_fp
        assert fp.method == "quadratic"
        newton = fp.diagnostics["pseudo_limit"]
        assert abs(newton[0, 0, 0] - PI_SYM) <= 1e-8
        assert abs(newton[1, 0, 0] - PI_HAT_SYM) <= 1e-8
        r_pi, _ = fp.diagnostics["quadratic"]
        # The discarded root is far from zero.
        assert r_pi.roots[0] < -1.0

    def test_residuals_vanish(self, tracking_fp):
        _, fp = tracking_fp
        assert max(fp.residuals.values()) <= 1e-10

    def test_asymmetric_game_uses_newton(self):
        g = scalar_game(b=(1.0, 2.0), q=(3.0, 2.0), l_x=(-1.0, -4.0))
        rs = solve_riccati(g)
        fp = solve_fixed_point(g, rs)
        assert fp.method == "newton"
        assert max(fp.residuals.values()) <= 1e-9

    def test_no_coupling_needs_no_correction(self):
        # One player, no cross-control costs: pi = 0 solves the fixed point.
        g = make_game(
            d=1, control_dims=[1], horizon=math.inf, rho=1.0,
            dynamics=dict(b_x=-0.2, gamma=[[1.0]], controls=[dict(b=1.5)]),
            players=[dict(Q=2.0, Q_tilde=0.5, L_x=[-1.0], blocks=[dict(N=1.0, N_tilde=0.3)])],
        )
        rs = solve_riccati(g)
        pi, ph, _ = solve_pi_infinite(g, rs)
        assert np.max(np.abs(pi)) <= 1e-12 and np.max(np.abs(ph)) <= 1e-12

    @settings(max_examples=8, deadline=None)
    @given(st.floats(0.0, 20.0), st.floats(0.2, 3.0), st.floats(0.5, 5.0))
    def test_closed_loop_is_stable(self, lam, b, rho):
        g = scalar_game(b=(b, b), q=(lam + 1.0, lam + 1.0), q_tilde=(-lam, -lam), rho=rho)
        rs = solve_riccati(g)
        blocks = BlockCache(g, rs)
        fp = solve_fixed_point(g, rs, blocks)
        A = gain_A(blocks(0.0), fp.pi(0.0))
        assert float(b * A.sum()) < 0.0


class TestFiniteHorizon:
    def test_terminal_values(self, finite_law):
        fp = finite_law.fp
        assert np.all(fp.pi(1.0) == 0.0) and np.all(fp.pi_hat(1.0) == 0.0)
        np.testing.assert_array_equal(fp.eta(1.0), [0.0, 0.0])

    def test_small_residuals(self, finite_law):
        assert max(finite_law.fp.residuals.values()) <= 1e-8

    def test_long_horizon_approaches_stationary(self, tracking_fp):
        _, fp_inf = tracking_fp
        g = scalar_game(horizon=15.0)
        rs = solve_riccati(g, make_grid(15.0, 200))
        fp = solve_fixed_point(g, rs)
        np.testing.assert_allclose(fp.pi(0.0), fp_inf.pi(0.0), atol=1e-8)
        np.testing.assert_allclose(fp.pi_hat(0.0), fp_inf.pi_hat(0.0), atol=1e-8)
        np.testing.assert_allclose(fp.eta(0.0), fp_inf.eta(0.0), atol=1e-7)
