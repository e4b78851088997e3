"""Riccati layer: closed-form scalar values, algebraic-Riccati and ODE oracles, convergence order."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import solve_continuous_are

from lqmkv._numerics import make_grid
from lqmkv.errors import ConfigError, SolverError
from lqmkv.model import make_game, sample
from lqmkv.riccati import (
    algebraic_residual,
    phi_K,
    solve_K,
    solve_K_infinite,
    solve_Lambda_infinite,
    solve_riccati,
)

from conftest import K_SYM, LAM_SYM, scalar_game


def _random_lq(rng, d, m, rho, horizon=math.inf):
    """Single player, additive noise, state-control cross cost."""
    b_x = 0.5 * rng.standard_normal((d, d))
    b = rng.standard_normal((d, m))
    R = rng.standard_normal((m, m))
    N = R @ R.T + m * np.eye(m)
    I = 0.3 * rng.standard_normal((m, d))
    Cq = rng.standard_normal((d, d))
    Q = Cq @ Cq.T + I.T @ np.linalg.solve(N, I) + 0.1 * np.eye(d)
    game = make_game(
        d=d, control_dims=[m], horizon=horizon, rho=rho,
        dynamics=dict(b_x=b_x, gamma=[np.ones(d)], controls=[dict(b=b)]),
        players=[dict(Q=Q, blocks=[dict(N=N, I=I)], P=np.eye(d))],
    )
    return game, b_x, b, Q, N, I


class TestStationaryScalar:
    def test_tracking_coefficients(self, tracking_game):
        rs = solve_riccati(tracking_game)
        for i in range(2):
            assert abs(rs.K_at(i, 0.0)[0, 0] - K_SYM) <= 1e-12
            assert abs(rs.Lam_at(i, 0.0)[0, 0] - LAM_SYM) <= 1e-12

    def test_residual_is_zero(self, tracking_game):
        rs = solve_riccati(tracking_game)
        assert algebraic_residual(tracking_game, 0, rs.K_at(0, 0.0), rs.Lam_at(0, 0.0)) <= 1e-12

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.1, 5.0), st.floats(0.0, 5.0), st.floats(0.2, 3.0), st.floats(0.5, 5.0))
    def test_scalar_root_formula(self, n, q, b, rho):
        # K solves (b^2/n) K^2 + rho K - q = 0 with K >= 0.
        g = scalar_game(b=(b, b), q=(q, q), q_tilde=(0.0, 0.0), n=(n, n), n_tilde=(0.0, 0.0), rho=rho)
        P = b * b / n
        expected = (-rho + math.sqrt(rho * rho + 4.0 * P * q)) / (2.0 * P)
        assert solve_K_infinite(g, 0)[0, 0] == pytest.approx(expected, abs=1e-10)


class TestAlgebraicRiccatiOracle:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_scipy_care(self, seed):
        rng = np.random.default_rng(seed)
        d, m, rho = 3, 2, 0.7
        game, b_x, b, Q, N, I = _random_lq(rng, d, m, rho)
        # Discounting shifts the drift by -rho/2; the cross term enters as 2 a' I x.
        X = solve_continuous_are(b_x - 0.5 * rho * np.eye(d), b, Q, N, s=I.T)
        K = solve_K_infinite(game, 0)
        np.testing.assert_allclose(K, X, atol=1e-9, rtol=1e-9)

    def test_mean_equation_without_mean_field_terms_equals_K(self):
        rng = np.random.default_rng(7)
        game, *_ = _random_lq(rng, 2, 1, 1.0)
        K = solve_K_infinite(game, 0)
        np.testing.assert_allclose(solve_Lambda_infinite(game, 0, K), K, atol=1e-9)


class TestFiniteHorizon:
    def test_terminal_value(self, finite_game):
        rs = solve_riccati(finite_game)
        assert rs.K_at(0, 1.0)[0, 0] == pytest.approx(0.5)
        assert rs.Lam_at(1, 1.0)[0, 0] == pytest.approx(1.0)

    def test_matches_adaptive_integrator(self):
        rng = np.random.default_rng(3)
        d = 2
        game, *_ = _random_lq(rng, d, 1, 0.4, horizon=1.5)

        def rhs(t, y):
            K = y.reshape(d, d)
            return (-phi_K(sample(game, t), 0, K)).ravel()

        ref = solve_ivp(rhs, (1.5, 0.0), np.eye(d).ravel(), method="DOP853", rtol=1e-12, atol=1e-13)
        K0 = solve_K(game, 0)(0.0)
        np.testing.assert_allclose(K0, ref.y[:, -1].reshape(d, d), atol=1e-9)

    def test_converges_to_stationary_solution(self):
        g_inf = scalar_game(rho=1.0)
        g_fin = scalar_game(rho=1.0, horizon=20.0)
        K_inf = solve_K_infinite(g_inf, 0)
        assert solve_K(g_fin, 0, make_grid(20.0, 200))(0.0)[0, 0] == pytest.approx(K_inf[0, 0], abs=1e-8)

    def test_rk4_order(self):
        g = make_game(
            d=1, control_dims=[1], horizon=2.0, rho=0.5,
            dynamics=dict(b_x=0.3, gamma=[[1.0]], controls=[dict(b=1.0)]),
            players=[dict(Q=2.0, P=3.0, blocks=[dict(N=1.0)])],
        )
        K0 = [float(solve_K(g, 0, make_grid(2.0, n))(0.0)[0, 0]) for n in (4, 8, 16, 32)]
        diffs = np.abs(np.diff(K0))
        orders = np.log2(diffs[:-1] / diffs[1:])
        assert np.all(orders >= 3.5), orders

    def test_grid_must_span_horizon(self, finite_game):
        with pytest.raises(ConfigError):
            solve_K(finite_game, 0, np.linspace(0.0, 0.5, 10))

    def test_singular_control_cost_is_a_solver_error(self):
        g = scalar_game(horizon=1.0, n=(0.0, 2.0), n_tilde=(0.0, -1.0))
        with pytest.raises(SolverError):
            solve_K(g, 0, make_grid(1.0, 10))
