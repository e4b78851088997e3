"""Acceptance criteria C1-C7, each at its stated tolerance; one summary line per criterion."""

import math
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from lqmkv.cli import main
from lqmkv.equilibrium import mean_state_path, solve_nash
from lqmkv.model import make_game, save_game
from lqmkv.riccati import solve_K
from lqmkv._numerics import make_grid
from lqmkv.simulate import SimConfig, simulate
from lqmkv.tracking_example import DEFAULT_PARAMS, build_game, closed_form, cross_check
from lqmkv.verify import (
    DRIFT_TOL,
    epsilon_fit,
    equilibrium_drift,
    martingale_check,
    oracle_deterministic,
    random_perturbations,
)

from conftest import random_deterministic_game, scalar_game

pytestmark = pytest.mark.acceptance


def verdict(ok):
    return "PASS" if ok else "FAIL"


class TestClosedFormRegression:
    def test_c1(self, record):
        """Generic pipeline equals the tracking closed form to 1e-7 in under 5 s."""
        t0 = time.perf_counter()
        law = solve_nash(build_game(DEFAULT_PARAMS))
        cc = cross_check(DEFAULT_PARAMS, tol=1e-7, law=law)
        root = -3.0 + math.sqrt(13.0)
        dK = max(abs(float(law.rs.K_at(i, 0.0)[0, 0]) - root) for i in range(2))
        dL = max(abs(float(law.rs.Lam_at(i, 0.0)[0, 0]) - root / 2.0) for i in range(2))
        elapsed = time.perf_counter() - t0
        ok = dK <= 1e-7 and dL <= 1e-7 and cc.passed and elapsed < 5.0
        record(f"C1 {verdict(ok)} closed form: |dK|={dK:.2e} |dLambda|={dL:.2e} max gain delta={cc.max_delta:.2e} time={elapsed:.1f}s")
        assert ok


class TestMeanReproduction:
    def test_c2(self, record):
        """Mean relaxes to the midpoint 5; MC mean (1e5 paths, dt 1e-3, t_end 5) within 3 SE at 10 checkpoints, under 60 s."""
        t0 = time.perf_counter()
        game = build_game(DEFAULT_PARAMS)
        law = solve_nash(game)
        A, Ah, c = law.gains(0.0)
        b = np.array(DEFAULT_PARAMS.b)
        xbar_inf = float(-(b @ c) / (b @ Ah[:, 0]))
        t, m = mean_state_path(game, law, np.linspace(0.0, 40.0, 4001))
        m = m[:, 0]
        # Monotone after the transient: from the first time the mean is within half-way of its limit.
        start = int(np.argmax(np.abs(m - xbar_inf) <= 0.5 * abs(m[0] - xbar_inf)))
        monotone = bool(np.all(np.diff(m[start:]) * np.sign(xbar_inf - m[0]) >= -1e-12))
        cfg = SimConfig(n_paths=100_000, n_steps=5000, t_end=5.0, seed=2, record_every=500, track_costs=False)
        ens = simulate(game, law, cfg)
        x = ens.states[:, 1:, 0]
        curve = closed_form(DEFAULT_PARAMS).mean_path(ens.times[1:])
        se = x.std(axis=0, ddof=1) / math.sqrt(x.shape[0])
        z = np.abs(x.mean(axis=0) - curve) / se
        elapsed = time.perf_counter() - t0
        ok = abs(xbar_inf - 5.0) <= 1e-6 and monotone and z.size == 10 and bool(np.all(z <= 3.0)) and elapsed < 60.0
        record(
            f"C2 {verdict(ok)} mean: |xbar_inf-5|={abs(xbar_inf - 5.0):.2e} monotone={monotone} "
            f"max |MC-analytic|/SE={z.max():.2f} over {z.size} checkpoints time={elapsed:.1f}s"
        )
        assert ok


class TestVarianceSweep:
    def test_c3(self, record):
        """Stationary variance decreases strictly in lambda; MC variance within 3 SE of sigma^2/(2a), under 120 s."""
        t0 = time.perf_counter()
        lams = (0.0, 10.0, 100.0, 500.0)
        target, zs = [], []
        for k, lam in enumerate(lams):
            p = DEFAULT_PARAMS.with_value("lambda", lam, (0, 1))
            cf = closed_form(p)
            var = p.sigma**2 / (2.0 * cf.a)
            target.append(var)
            game = build_game(p)
            law = solve_nash(game)
            # a dt = 2e-3 keeps the Euler variance bias (about a dt / 2) far below the SE;
            # t_end = 6/a leaves e^{-12} of the initial transient.
            t_end = 6.0 / cf.a
            n_steps = 3000
            cfg = SimConfig(n_paths=50_000, n_steps=n_steps, t_end=t_end, seed=10 + k, record_every=n_steps, track_costs=False)
            x = simulate(game, law, cfg).states[:, -1, 0]
            dev2 = (x - x.mean()) ** 2
            zs.append(abs(dev2.mean() * x.size / (x.size - 1) - var) / (dev2.std(ddof=1) / math.sqrt(x.size)))
        elapsed = time.perf_counter() - t0
        decreasing = all(u > v for u, v in zip(target, target[1:]))
        ok = decreasing and max(zs) <= 3.0 and elapsed < 120.0
        record(
            f"C3 {verdict(ok)} variance sweep: sigma^2/(2a)=" + ",".join(f"{v:.4f}" for v in target)
            + f" strictly decreasing={decreasing} max |MC-target|/SE={max(zs):.2f} time={elapsed:.1f}s"
        )
        assert ok


class TestOptimalityPrinciple:
    def test_c4(self, record, tracking_game, tracking_law):
        """Zero analytic drift and flat E[S_t] at equilibrium; nonnegative drift and nondecreasing E[S_t] under perturbations."""
        cfg = SimConfig(n_paths=20_000, n_steps=1000, t_end=5.0, seed=4, record_every=100, cost_rule="trapezoid")
        drift_eq, flat, min_pert_drift, violations = 0.0, True, math.inf, 0
        for i in range(2):
            drift_eq = max(drift_eq, equilibrium_drift(tracking_law, i).max_abs)
            flat &= martingale_check(tracking_law, i, cfg).flat
            for dev in random_perturbations(tracking_game, tracking_law, i, count=5, seed=7):
                min_pert_drift = min(min_pert_drift, equilibrium_drift(tracking_law, i, dev).min)
                violations += martingale_check(tracking_law, i, cfg, dev).monotonicity_violations
        ok = drift_eq <= DRIFT_TOL and flat and min_pert_drift >= -1e-7 and violations == 0
        record(
            f"C4 {verdict(ok)} optimality: max |E D| at equilibrium={drift_eq:.2e} MC flat={flat} "
            f"min E D over 10 perturbations={min_pert_drift:.2e} E S decreases beyond 3 SE={violations}"
        )
        assert ok


class TestDeviationSuite:
    def test_c5(self, record, tracking_law):
        """Family eps * (unit offset + unit reference-state gain), trapezoid rule with Richardson extrapolation."""
        cfg = SimConfig(n_paths=16_384, n_steps=1000, t_end=5.0, seed=13, cost_rule="trapezoid")
        parts, ok = [], True
        for i in range(2):
            fit = epsilon_fit(tracking_law, i, cfg, dA_ref=1.0, dc=1.0, richardson=True)
            ok &= fit.passed
            parts.append(
                f"player {i + 1}: min dJ/SE={np.min(fit.delta / fit.se):.1f} linear={fit.linear:.2e}+-{fit.linear_se:.1e} R2={fit.r2:.5f}"
            )
        record(f"C5 {verdict(ok)} deviations: " + "; ".join(parts))
        assert ok


class TestOracleEquivalence:
    def test_c6(self, record):
        """Ten random deterministic scalar games agree with the coupled-Riccati oracle to 1e-6."""
        rng = np.random.default_rng(2024)
        devs = [oracle_deterministic(solve_nash(random_deterministic_game(rng)), tol=1e-6).max_deviation for _ in range(10)]
        ok = max(devs) <= 1e-6
        record(f"C6 {verdict(ok)} oracle: max trajectory deviation over 10 games={max(devs):.2e}")
        assert ok


class TestNumericalHygiene:
    def test_c7(self, record, tmp_path):
        """RK4 order at least 3.5 against a DOP853 reference; same seed gives byte-identical CSV outputs."""
        rho, bx, q, n, b, P = 0.5, 0.3, 2.0, 1.0, 1.0, 3.0
        g = make_game(
            d=1, control_dims=[1], horizon=2.0, rho=rho,
            dynamics=dict(b_x=bx, gamma=[[1.0]], controls=[dict(b=b)]),
            players=[dict(Q=q, P=P, blocks=[dict(N=n)])],
        )
        # Backward scalar Riccati K' = (rho - 2 b_x) K + (b^2/n) K^2 - q, K(T) = P, in reversed time.
        ref = solve_ivp(
            lambda s, k: -((rho - 2.0 * bx) * k + (b * b / n) * k * k - q), (0.0, 2.0), [P],
            method="DOP853", rtol=1e-13, atol=1e-14,
        ).y[0, -1]
        errs = [abs(float(solve_K(g, 0, make_grid(2.0, m))(0.0)[0, 0]) - ref) for m in (4, 8, 16, 32)]
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        game_file = tmp_path / "game.yaml"
        save_game(scalar_game(horizon=1.0, x0=1.0, x0_var=0.5), str(game_file))
        outs = []
        for run in range(2):
            out = tmp_path / f"run{run}"
            code = main(["simulate", "--input", str(game_file), "--out", str(out), "--seed", "123",
                         "--paths", "5000", "--steps", "200", "--grid", "500"])
            outs.append((code, (out / "trajectories.csv").read_bytes()))
        same = outs[0][0] == outs[1][0] == 0 and outs[0][1] == outs[1][1]
        ok = bool(np.all(orders >= 3.5)) and same
        record(f"C7 {verdict(ok)} hygiene: RK4 orders=" + ",".join(f"{o:.2f}" for o in orders) + f" byte-identical rerun={same}")
        assert ok
