"""
Command-line front end.

    lqmkv solve    --input game.yaml --out DIR [--grid N]
    lqmkv simulate --input game.yaml --out DIR [--law gains.csv] [--seed S --paths P --steps N --t-end T]
    lqmkv verify   --input game.yaml --out DIR [--law gains.csv] [--paths P ...] [--tol TOL]
    lqmkv sweep    [--input params.yaml] --out DIR --parameter lambda --values 0,10,100,500
    lqmkv example  [--input params.yaml] --out DIR [--paths P ...]

Errors print one ``error category=... message=...`` line on stderr and exit
with the category's code (CONFIG 2, SOLVER 3, VERIFY 4, other 1).  The
``LQMKV_THREADS`` environment variable sets the number of simulation threads.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import _io
from .equilibrium import AffineProfile, EquilibriumLaw, moment_grid, moment_path, solve_nash, value
from .errors import EXIT_CODES, ConfigError, LQMKVError, VerificationError
from .model import GameSpec, load_game
from .simulate import BLOCK_SIZE, SimConfig, estimate_cost, iter_blocks, simulate
from .tracking_example import (
    DEFAULT_PARAMS,
    PARAMETERS,
    SWEEP_COLUMNS,
    TrackingParams,
    build_game,
    closed_form,
    cross_check,
    sweep,
)
from .verify import RunningMoments, verify_equilibrium

logger = logging.getLogger("lqmkv")

DEFAULTS = dict(seed=0, paths=10_000, steps=1000, grid=2000, tol=1e-7)
MAX_RECORDS = 100
QUANTILES = (0.05, 0.5, 0.95)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _load_params(path: str | None) -> TrackingParams:
    if path is None:
        return DEFAULT_PARAMS
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"input file not found: {p}")
    try:
        doc = yaml.safe_load(p.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return params_from_dict(doc)


def params_from_dict(doc: dict) -> TrackingParams:
    """Tracking parameters from a mapping; per-player entries accept a scalar or a pair."""
    names = {"lambda": "lam", "delta": "delta", "theta": "theta", "xi": "xi", "targets": "targets", "b": "b"}
    kw: dict = {}
    for key, value in doc.items():
        if key in names:
            v = value if isinstance(value, (list, tuple)) else [value, value]
            kw[names[key]] = tuple(float(x) for x in v)
        elif key in ("sigma", "rho", "x0_mean", "x0_var"):
            kw[key] = float(value)
        else:
            raise ConfigError(f"unknown tracking parameter {key!r}")
    return TrackingParams(**kw)


def _sim_config(game: GameSpec, args: argparse.Namespace) -> SimConfig:
    t_end = args.t_end
    if t_end is None:
        t_end = game.horizon if not game.is_infinite else max(5.0, 10.0 / game.rho)
    steps = args.steps
    return SimConfig(
        n_paths=args.paths,
        n_steps=steps,
        t_end=float(t_end),
        seed=args.seed,
        mean_mode=args.mean_mode,
        record_every=max(1, steps // MAX_RECORDS),
    )


def _solve(game: GameSpec, grid: int) -> EquilibriumLaw:
    return solve_nash(game, steps_per_unit=grid)


def _law_times(game: GameSpec, law: EquilibriumLaw) -> np.ndarray:
    if law.is_constant:
        return np.zeros(1)
    if not game.is_infinite:
        return law.grid
    return law.fp.eta.grid


def _write_solution(out: Path, game: GameSpec, law: EquilibriumLaw) -> list[Path]:
    files = []
    times = _law_times(game, law)
    files.append(_io.write_csv(out / "gains.csv", _io.law_header(game), _io.law_rows(times, law.tabulate(times))))
    n, d = game.n, game.d
    head = ["t"]
    for i in range(n):
        head += [f"K{i}_{r}_{c}" for r in range(d) for c in range(d)]
        head += [f"Lambda{i}_{r}_{c}" for r in range(d) for c in range(d)]
    head += [f"pi_{r}_{c}" for r in range(n * d) for c in range(d)]
    head += [f"pi_hat_{r}_{c}" for r in range(n * d) for c in range(d)]
    head += [f"eta_{r}" for r in range(n * d)]
    rows = []
    for t in times:
        t = float(t)
        row = [t]
        for i in range(n):
            row += list(law.rs.K_at(i, t).ravel()) + list(law.rs.Lam_at(i, t).ravel())
        row += list(law.fp.pi(t).ravel()) + list(law.fp.pi_hat(t).ravel()) + list(law.fp.eta(t))
        rows.append(row)
    files.append(_io.write_csv(out / "coefficients.csv", head, rows))
    mp = moment_path(game, law)
    stride = max(1, (mp.grid.size - 1) // 1000)
    idx = np.arange(0, mp.grid.size, stride)
    head = ["t"] + [f"mean_{k}" for k in range(d)] + [f"cov_{r}_{c}" for r in range(d) for c in range(d)]
    cov = mp.own_cov()
    files.append(
        _io.write_csv(
            out / "mean.csv", head, ([mp.grid[j]] + list(mp.m[j]) + list(cov[j].ravel()) for j in idx)
        )
    )
    report = {
        "horizon": "infinite" if game.is_infinite else game.horizon,
        "values": {f"player{i}": value(game, i, law, mp) for i in range(n)},
        "fixed_point": {"method": law.fp.method, "residuals": law.fp.residuals},
        "assumptions": [
            {"name": c.name, "player": c.player, "passed": c.passed, "margin": c.margin} for c in law.report.conditions
        ],
    }
    files.append(_io.write_report(out / "solution.yaml", report))
    return files


def _trajectory_table(
    game: GameSpec, law: AffineProfile, cfg: SimConfig
) -> tuple[list[str], list[list[float]], dict]:
    """Analytic mean with MC mean, standard error, variance and quantile bands per state coordinate."""
    d = game.d
    mp = moment_path(game, law, np.linspace(0.0, cfg.t_end, cfg.n_steps + 1))
    rec = cfg.record_steps()
    stats = RunningMoments()
    states = []
    cost = [RunningMoments() for _ in range(game.n)]
    tail = np.zeros(game.n)
    if cfg.mean_mode == "analytic":
        parts = iter_blocks(game, law, cfg)
    else:
        parts = [simulate(game, law, cfg)]
    for ens in parts:
        stats.add(ens.states)
        states.append(ens.states)
        for i in range(game.n):
            cost[i].add(ens.total_costs(i))
            tail[i] += ens.final_rate[:, i].sum()
    X = np.concatenate(states)
    q = np.quantile(X, QUANTILES, axis=0)
    var = np.asarray(stats.m2) / (stats.n - 1)
    head = ["t"]
    for k in range(d):
        head += [f"mean_analytic_{k}", f"mean_mc_{k}", f"se_{k}", f"var_mc_{k}"] + [f"q{int(100 * p):02d}_{k}" for p in QUANTILES]
    rows = []
    for r, j in enumerate(rec):
        row = [float(j * cfg.dt)]
        for k in range(d):
            row += [mp.m[j, k], stats.mean[r, k], math.sqrt(var[r, k] / stats.n), var[r, k]] + list(q[:, r, k])
        rows.append(row)
    summary = {
        f"player{i}": {
            "cost_mean": float(cost[i].mean),
            "cost_se": float(cost[i].se),
            "tail_bound": float(abs(tail[i]) / stats.n / game.rho) if game.is_infinite else 0.0,
        }
        for i in range(game.n)
    }
    return head, rows, summary


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_solve(args: argparse.Namespace) -> int:
    game = load_game(args.input)
    out = _out_dir(args.out)
    law = _solve(game, args.grid)
    files = _write_solution(out, game, law)
    _io.write_manifest(out, "solve", {"input": Path(args.input)}, {"grid": args.grid}, files)
    print(f"solved; gains written to {out / 'gains.csv'}")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    game = load_game(args.input)
    out = _out_dir(args.out)
    law: AffineProfile = _io.read_law(game, Path(args.law)) if args.law else _solve(game, args.grid)
    cfg = _sim_config(game, args)
    head, rows, summary = _trajectory_table(game, law, cfg)
    files = [_io.write_csv(out / "trajectories.csv", head, rows)]
    if isinstance(law, EquilibriumLaw):
        for i in range(game.n):
            summary[f"player{i}"]["value_analytic"] = value(game, i, law)
    files.append(_io.write_report(out / "simulation.yaml", {"config": vars(cfg), "costs": summary}))
    _io.write_manifest(
        out,
        "simulate",
        {"input": Path(args.input), "law": Path(args.law) if args.law else None},
        {"seed": args.seed, "paths": args.paths, "steps": args.steps, "t_end": cfg.t_end, "mean_mode": args.mean_mode},
        files,
    )
    print(f"simulated {cfg.n_paths} paths; table written to {out / 'trajectories.csv'}")
    return 0


def _verification_files(out: Path, rep) -> list[Path]:
    files = [_io.write_report(out / "verification.yaml", rep.summary())]
    drift = rep.drift or rep.candidate_drift
    if drift:
        head = ["t"]
        for s in drift:
            head += [f"drift_{s.player}", f"square_form_{s.player}"]
        cols = [c for s in drift for c in (s.drift, s.square_form)]
        files.append(_io.write_csv(out / "drift.csv", head, ([t] + [c[j] for c in cols] for j, t in enumerate(drift[0].times))))
    if rep.martingale:
        head = ["t"]
        for s in rep.martingale:
            head += [f"ES_minus_ES0_{s.player}", f"se_{s.player}"]
        cols = [c for s in rep.martingale for c in (s.diff, s.diff_se)]
        files.append(
            _io.write_csv(out / "martingale.csv", head, ([t] + [c[j] for c in cols] for j, t in enumerate(rep.martingale[0].times)))
        )
    return files


def cmd_verify(args: argparse.Namespace) -> int:
    game = load_game(args.input)
    out = _out_dir(args.out)
    law = _solve(game, args.grid)
    candidate = _io.read_law(game, Path(args.law)) if args.law else None
    cfg = _sim_config(game, args) if args.paths > 0 and candidate is None else None
    rep = verify_equilibrium(law, cfg, candidate=candidate, tol=args.tol)
    files = _verification_files(out, rep)
    _io.write_manifest(
        out,
        "verify",
        {"input": Path(args.input), "law": Path(args.law) if args.law else None},
        {"seed": args.seed, "paths": args.paths, "steps": args.steps, "tol": args.tol},
        files,
    )
    if not rep.passed:
        raise VerificationError("; ".join(rep.failures()))
    print("verification passed")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    params = _load_params(args.input)
    out = _out_dir(args.out)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
        players = [int(v) - 1 for v in args.players.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad --values or --players: {exc}") from exc
    if not values:
        raise ConfigError("--values is empty")
    if any(i not in (0, 1) for i in players):
        raise ConfigError("--players takes 1 and/or 2")
    rows = sweep(params, args.parameter, values, players)
    f = _io.write_csv(out / "sweep.csv", SWEEP_COLUMNS, ([r[c] for c in SWEEP_COLUMNS] for r in rows))
    _io.write_manifest(
        out,
        "sweep",
        {"input": Path(args.input) if args.input else None},
        {"parameter": args.parameter, "values": values, "players": [i + 1 for i in players]},
        [f],
    )
    print(f"sweep written to {f}")
    return 0


def cmd_example(args: argparse.Namespace) -> int:
    params = _load_params(args.input)
    out = _out_dir(args.out)
    game = build_game(params)
    law = _solve(game, args.grid)
    files = _write_solution(out, game, law)
    cc = cross_check(params, tol=args.tol, law=law)
    cf = closed_form(params)
    files.append(
        _io.write_report(
            out / "closed_form.yaml",
            {
                "K": cf.K,
                "Lambda": cf.Lam,
                "P": cf.P,
                "P_tilde": cf.P_tilde,
                "a": cf.a,
                "a_tilde": cf.a_tilde,
                "pi": cf.pi,
                "pi_tilde": cf.pi_tilde,
                "eta_bar": cf.eta_bar,
                "xbar_inf": cf.xbar_inf,
                "stationary_variance": cf.stationary_variance,
                "cross_check": {"passed": cc.passed, "max_delta": cc.max_delta, "deltas": cc.deltas},
            },
        )
    )
    cfg = _sim_config(game, args)
    head, rows, summary = _trajectory_table(game, law, cfg)
    files.append(_io.write_csv(out / "mean_trajectory.csv", head, rows))
    for lam in (0.0, 10.0, 100.0, 500.0):
        p_l = params.with_value("lambda", lam, (0, 1))
        g_l = build_game(p_l)
        h_l, r_l, _ = _trajectory_table(g_l, _solve(g_l, args.grid), cfg)
        files.append(_io.write_csv(out / f"variance_lambda_{lam:g}.csv", h_l, r_l))
    sw = sweep(params, "lambda", [0.0, 10.0, 100.0, 500.0], (0, 1))
    files.append(_io.write_csv(out / "sweep_lambda.csv", SWEEP_COLUMNS, ([r[c] for c in SWEEP_COLUMNS] for r in sw)))
    rep = verify_equilibrium(law, cfg if args.paths > 0 else None, tol=args.tol)
    files += _verification_files(out, rep)
    files.append(_io.write_report(out / "simulation.yaml", {"config": vars(cfg), "costs": summary}))
    _io.write_manifest(
        out,
        "example",
        {"input": Path(args.input) if args.input else None},
        {"seed": args.seed, "paths": args.paths, "steps": args.steps, "t_end": cfg.t_end, "grid": args.grid, "tol": args.tol},
        files,
    )
    failures = ([] if cc.passed else [f"closed-form cross-check max delta {cc.max_delta:.3g}"]) + rep.failures()
    if failures:
        raise VerificationError("; ".join(failures))
    print(f"example written to {out}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonneg_int(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError("must be a nonnegative integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lqmkv", description="Linear-quadratic mean-field Nash equilibria.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, input_required: bool) -> None:
        p.add_argument("--input", required=input_required, help="game (YAML) or tracking parameters (YAML)")
        p.add_argument("--out", required=True, help="output directory (created if missing)")
        p.add_argument("--grid", type=_positive_int, default=DEFAULTS["grid"], help="solver steps per time unit (default 2000)")
        p.add_argument("--tol", type=float, default=DEFAULTS["tol"], help="analytic drift and cross-check tolerance (default 1e-7)")

    def mc(p: argparse.ArgumentParser, paths_min: int) -> None:
        kind = _nonneg_int if paths_min == 0 else _positive_int
        p.add_argument("--seed", type=_nonneg_int, default=DEFAULTS["seed"], help="64-bit RNG seed (default 0)")
        p.add_argument("--paths", type=kind, default=DEFAULTS["paths"], help="Monte Carlo paths (default 10000)")
        p.add_argument("--steps", type=_positive_int, default=DEFAULTS["steps"], help="Euler steps (default 1000)")
        p.add_argument("--t-end", type=float, default=None, help="simulation end (default: horizon, or max(5, 10/rho))")
        p.add_argument("--mean-mode", choices=("analytic", "particle"), default="analytic")

    p = sub.add_parser("solve", help="solve for the equilibrium and write gains, coefficients and values")
    common(p, True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="simulate under the equilibrium or a law table")
    common(p, True)
    mc(p, 2)
    p.add_argument("--law", help="law table (gains.csv from solve); default: solve the game")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="certify the equilibrium or a candidate law table")
    common(p, True)
    mc(p, 0)
    p.add_argument("--law", help="candidate law table; checked against each player's best response")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="closed-form sweep of the tracking game")
    common(p, False)
    p.add_argument("--parameter", choices=PARAMETERS, required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--players", default="1", help="players receiving the value, e.g. 1 or 1,2 (default 1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("example", help="tracking game: solve, cross-check, simulate, verify")
    common(p, False)
    mc(p, 0)
    p.set_defaults(func=cmd_example)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "input", None) is not None and not Path(args.input).is_file():
            raise ConfigError(f"input file not found: {args.input}")
        return args.func(args)
    except LQMKVError as exc:
        print(f"error category={exc.category} message={exc}", file=sys.stderr)
        return EXIT_CODES[exc.category]
    except Exception as exc:  # noqa: BLE001
        print(f"error category=INTERNAL message={type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CODES["INTERNAL"]


if __name__ == "__main__":
    sys.exit(main())
