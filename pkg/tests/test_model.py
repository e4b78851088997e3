"""Game data: construction, validation, sampling and the document round trip."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lqmkv.errors import ConfigError, DimensionError, RangeError
from lqmkv.model import (
    CoefficientPath,
    game_from_dict,
    game_to_dict,
    hat,
    load_game,
    make_game,
    sample,
    save_game,
    validate_assumptions,
)

from conftest import scalar_game


class TestCoefficientPath:
    def test_constant_path_ignores_time(self):
        p = CoefficientPath.constant(np.eye(2))
        assert p.is_constant
        np.testing.assert_array_equal(p(17.0), np.eye(2))

    def test_piecewise_linear_between_knots(self):
        p = CoefficientPath(np.array([0.0, 1.0, 3.0]), np.array([0.0, 2.0, 0.0]))
        assert p(0.5) == pytest.approx(1.0)
        assert p(2.0) == pytest.approx(1.0)
        assert p(1.0) == 2.0

    def test_outside_span_raises_unless_clamped(self):
        p = CoefficientPath(np.array([0.0, 1.0]), np.array([1.0, 3.0]))
        with pytest.raises(RangeError):
            p(1.5)
        assert p(1.5, clamp=True) == 3.0

    def test_rejects_unsorted_grid_and_nonfinite_values(self):
        with pytest.raises(ConfigError):
            CoefficientPath(np.array([0.0, 0.0]), np.array([1.0, 2.0]))
        with pytest.raises(ConfigError):
            CoefficientPath(np.array([0.0, 1.0]), np.array([1.0, np.nan]))

    def test_hat_merges_grids(self):
        a = CoefficientPath(np.array([0.0, 2.0]), np.array([0.0, 2.0]))
        b = CoefficientPath(np.array([0.0, 1.0, 2.0]), np.array([1.0, 1.0, 1.0]))
        h = hat(a, b)
        np.testing.assert_array_equal(h.grid, [0.0, 1.0, 2.0])
        for t in (0.0, 0.3, 1.5, 2.0):
            assert h(t) == pytest.approx(a(t) + b(t))

    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=6), st.floats(0.0, 1.0))
    def test_interpolant_stays_within_neighbour_values(self, vals, w):
        grid = np.arange(len(vals), dtype=float)
        p = CoefficientPath(grid, np.array(vals))
        j = min(int(w * (len(vals) - 1)), len(vals) - 2)
        t = j + (w * (len(vals) - 1) - j)
        v = float(p(t))
        assert min(vals[j], vals[j + 1]) - 1e-12 <= v <= max(vals[j], vals[j + 1]) + 1e-12


class TestGameValidation:
    def test_shapes_and_slices(self):
        g = make_game(d=2, control_dims=[1, 2], horizon=1.0, rho=0.0, players=[{}, {}])
        assert (g.n, g.d, g.d_a, g.kappa) == (2, 2, 3, 1)
        assert g.control_slices() == [slice(0, 1), slice(1, 3)]

    def test_wrong_matrix_shape(self):
        with pytest.raises(DimensionError):
            make_game(d=2, control_dims=[1], horizon=1.0, rho=0.0, players=[dict(Q=np.eye(3))])

    def test_asymmetric_state_cost(self):
        with pytest.raises(ConfigError):
            make_game(d=2, control_dims=[1], horizon=1.0, rho=0.0, players=[dict(Q=[[1.0, 1.0], [0.0, 1.0]])])

    def test_indefinite_initial_covariance(self):
        with pytest.raises(ConfigError):
            make_game(d=1, control_dims=[1], horizon=1.0, rho=0.0, x0_cov=[[-1.0]])

    def test_path_must_cover_horizon(self):
        with pytest.raises(RangeError):
            make_game(
                d=1, control_dims=[1], horizon=2.0, rho=0.0,
                players=[dict(Q={"grid": [0.0, 1.0], "values": [1.0, 2.0]}, blocks=[dict(N=1.0)])],
            )

    def test_negative_discount(self):
        with pytest.raises(ConfigError):
            scalar_game(rho=-1.0)

    def test_sample_range(self, finite_game):
        sample(finite_game, 1.0)
        with pytest.raises(RangeError):
            sample(finite_game, 1.5)

    def test_hatted_sums(self, tracking_game):
        s = sample(tracking_game, 0.0)
        c = s.costs[0]
        assert c.Q_hat[0, 0] == pytest.approx(1.0)
        assert c.N_hat[0][0, 0] == pytest.approx(1.0)
        assert c.L_x[0] == 0.0 and s.costs[1].L_x[0] == pytest.approx(-10.0)


class TestAssumptions:
    def test_tracking_game_passes(self, tracking_game):
        assert validate_assumptions(tracking_game).passed

    def test_zero_control_cost_fails(self):
        rep = validate_assumptions(scalar_game(n=(0.0, 2.0), n_tilde=(0.0, -1.0)))
        assert not rep.get("control_cost_positive", 0).passed
        assert rep.get("control_cost_positive", 1).passed

    def test_weak_discount_flagged(self):
        rep = validate_assumptions(scalar_game(rho=0.1, b_x=1.0))
        assert not rep.get("discount_dominates_drift").passed


class TestDocuments:
    def test_round_trip(self, tmp_path, finite_game):
        path = tmp_path / "game.yaml"
        save_game(finite_game, str(path))
        back = load_game(str(path))
        assert game_to_dict(back) == game_to_dict(finite_game)

    def test_infinite_horizon_keyword(self, tracking_game):
        doc = game_to_dict(tracking_game)
        assert doc["horizon"] == "infinite"
        assert math.isinf(game_from_dict(doc).horizon)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_game(str(tmp_path / "absent.yaml"))

    def test_malformed_document(self):
        with pytest.raises(ConfigError):
            game_from_dict({"dimensions": {"state": 1}})
        with pytest.raises(ConfigError):
            game_from_dict({"dimensions": {"state": 1, "controls": [1]}, "horizon": "forever"})

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.1, 5.0), st.floats(0.0, 2.0), st.floats(-3.0, 3.0))
    def test_round_trip_preserves_sampled_coefficients(self, q, rho, beta):
        g = make_game(
            d=1, control_dims=[1], horizon=2.0, rho=rho,
            dynamics=dict(beta={"grid": [0.0, 2.0], "values": [[beta], [0.0]]}),
            players=[dict(Q=q, blocks=[dict(N=1.0)])],
        )
        back = game_from_dict(game_to_dict(g))
        for t in (0.0, 0.7, 2.0):
            a, b = sample(g, t), sample(back, t)
            np.testing.assert_array_equal(a.beta, b.beta)
            np.testing.assert_array_equal(a.costs[0].Q, b.costs[0].Q)
