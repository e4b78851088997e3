"""
Empirical certification of equilibrium laws.

For player i with value field W (coefficients K, Lambda, Y = p x~^r + p^ xbar^r + y
and R) the process S_t = e^{-rho t} W(X_t) + int_0^t e^{-rho u} f du has drift
e^{-rho t} D_t with

    E[D_t] = E[(a~ - a~*)' S (a~ - a~*)] + (abar - abar*)' S^ (abar - abar*) >= 0,

where a* is player i's best response.  The drift is evaluated here in two ways:
from the expanded quadratic field (moments of the closed loop) and from the
square form.  Monte Carlo checks then test E[S_t] for flatness or growth and
compare costs of deviations with common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import _moments as mom
from ._numerics import simpson_weights
from .equilibrium import (
    AffineProfile,
    EquilibriumLaw,
    FieldFn,
    PlayerLaw,
    R_path,
    analytic_cost,
    best_response,
    h_at,
    moment_grid,
    moment_path,
    value,
)
from .errors import ConfigError, SolverError
from .model import GameSpec, sample
from .riccati import RiccatiSolution
from .simulate import SimConfig, iter_blocks

DRIFT_TOL = 1e-7
SIGMAS = 3.0


class RunningMoments:
    """Mean and variance of per-path arrays accumulated block by block (Chan's merge)."""

    def __init__(self) -> None:
        self.n = 0
        self.mean: np.ndarray | float = 0.0
        self.m2: np.ndarray | float = 0.0

    def add(self, x: np.ndarray) -> None:
        nb = x.shape[0]
        if nb == 0:
            return
        mb = x.mean(axis=0)
        m2b = ((x - mb) ** 2).sum(axis=0)
        if self.n == 0:
            self.n, self.mean, self.m2 = nb, mb, m2b
            return
        n = self.n + nb
        delta = mb - self.mean
        self.mean = self.mean + delta * nb / n
        self.m2 = self.m2 + m2b + delta**2 * self.n * nb / n
        self.n = n

    @property
    def se(self) -> np.ndarray | float:
        return np.sqrt(self.m2 / (self.n - 1) / self.n)


# ---------------------------------------------------------------------------
# Analytic drift
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DriftStats:
    """E[D_t] for one player on a grid, from the field and from the square form.

    ``gap`` is the discounted integral of the square form: the cost excess of
    the law over the best response.
    """

    player: int
    times: np.ndarray
    drift: np.ndarray
    square_form: np.ndarray
    gap: float

    @property
    def min(self) -> float:
        return float(self.drift.min())

    @property
    def max_abs(self) -> float:
        return float(np.abs(self.drift).max())

    @property
    def route_mismatch(self) -> float:
        return float(np.abs(self.drift - self.square_form).max())


def drift_check(
    game: GameSpec,
    i: int,
    field_fn: FieldFn,
    reference: AffineProfile,
    own: PlayerLaw | None = None,
    grid: np.ndarray | None = None,
    stride: int | None = None,
) -> DriftStats:
    """E[D^i_t] with opponents on ``reference`` and player i on ``own`` (default: its reference rows).

    Moments are integrated on ``grid``; the drift is evaluated on every
    ``stride``-th point (default: at most about 400 points).
    """
    grid = moment_grid(game, reference) if grid is None else grid
    mp = moment_path(game, reference, grid, i, own)
    if stride is None:
        stride = max(1, (grid.size - 1) // 400)
        while (grid.size - 1) % stride and stride > 1:
            stride -= 1
    idx = np.arange(0, grid.size, stride)
    sl = game.control_slices()
    d = game.d
    drift = np.empty(idx.size)
    square = np.empty(idx.size)
    for q, j in enumerate(idx):
        t = float(grid[j])
        snap = sample(game, t)
        fv = field_fn(t)
        ref = reference.gains(t)
        m, mr, C = mp.m[j], mp.mr[j], mp.C[j]
        og = own.full_gains(t) if own is not None else tuple(g[sl[i]] for g in ref)
        own_L, own_m = mom.own_form(og, d, m)
        sc = mom.scenario(snap, i, sl, ref, own_L, own_m, m, mr)
        drift[q] = mom.expected_drift_without_R(snap, i, sl, sc, fv, C, m, mr) - h_at(game, i, snap, fv, ref, mr, C)
        co = mom.br_coefficients(snap, i, sl, fv.K, fv.Lam, fv.p, fv.ph, fv.y, ref)
        dL = own_L + np.linalg.solve(co.S, np.hstack([co.U, co.Xi]))
        dm = own_m + np.linalg.solve(co.S_hat, co.V @ m + co.O @ mr + co.o)
        zero = np.zeros(dm.size)
        square[q] = mom.expect(dL, zero, co.S, dL, zero, C) + dm @ co.S_hat @ dm
    times = grid[idx]
    disc = np.exp(-game.rho * times)
    gap = float(np.sum(simpson_weights(times) * disc * square))
    if game.is_infinite:
        gap += disc[-1] * square[-1] / game.rho
    return DriftStats(i, times, drift, square, gap)


def equilibrium_drift(law: EquilibriumLaw, i: int, deviation: PlayerLaw | None = None, **kw) -> DriftStats:
    """Drift of player i's equilibrium field when it plays ``deviation`` (default: its equilibrium law)."""
    if deviation is not None and deviation.player != i:
        raise ConfigError(f"deviation is for player {deviation.player}, not {i}")
    return drift_check(law.game, i, lambda t: law.field(i, t), law, deviation, **kw)


def candidate_drift(game: GameSpec, candidate: AffineProfile, i: int, rs: RiccatiSolution | None = None, **kw) -> DriftStats:
    """Drift of player i's best-response field against the candidate's opponents, playing the candidate's rows."""
    br = best_response(game, i, candidate, rs)
    return drift_check(game, i, br.field, candidate, None, **kw)


# ---------------------------------------------------------------------------
# Monte Carlo checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MartingaleStats:
    """E[S_t] - E[S_0] with standard errors on the recorded times."""

    player: int
    times: np.ndarray
    mean_S0: float
    se_S0: float
    value: float
    diff: np.ndarray
    diff_se: np.ndarray
    incr: np.ndarray
    incr_se: np.ndarray

    @property
    def flatness(self) -> float:
        return float(np.abs(self.diff).max())

    @property
    def flat(self) -> bool:
        return bool(np.all(np.abs(self.diff) <= SIGMAS * self.diff_se + 1e-14))

    @property
    def monotonicity_violations(self) -> int:
        return int(np.sum(self.incr < -SIGMAS * self.incr_se - 1e-14))

    @property
    def end_increase(self) -> tuple[float, float]:
        return float(self.diff[-1]), float(self.diff_se[-1])


def martingale_check(
    law: EquilibriumLaw, i: int, cfg: SimConfig, deviation: PlayerLaw | None = None
) -> MartingaleStats:
    """S^i_t along simulated paths with the equilibrium field of player i.

    ``deviation`` replaces player i's law on its own state; the field still
    uses the reference (equilibrium) state for its Y term.
    """
    game = law.game
    field_fn = lambda t: law.field(i, t)  # noqa: E731
    mp = moment_path(game, law)
    R = R_path(game, i, field_fn, law, mp)
    W0 = value(game, i, law, mp)
    diff, incr, s0 = RunningMoments(), RunningMoments(), RunningMoments()
    times = None
    coef = None
    for ens in iter_blocks(game, law, cfg, deviation):
        if coef is None:
            times = ens.times
            coef = [(field_fn(float(t)), float(R(float(t)))) for t in times]
        S = np.empty((ens.n_paths, times.size))
        for j, t in enumerate(times):
            fv, Rt = coef[j]
            x, m = ens.states[:, j], ens.means[j]
            xr, mr = ens.ref_states[:, j], ens.ref_means[j]
            xt = x - m
            Y = (xr - mr) @ fv.p.T + fv.ph @ mr + fv.y
            W = np.einsum("pi,ij,pj->p", xt, fv.K, xt) + m @ fv.Lam @ m + 2.0 * np.einsum("pi,pi->p", Y, x) + Rt
            S[:, j] = math.exp(-game.rho * t) * W + ens.cum_costs[:, j, i]
        diff.add(S - S[:, :1])
        incr.add(np.diff(S, axis=1))
        s0.add(S[:, 0])
    return MartingaleStats(
        i, times, float(s0.mean), float(s0.se), W0, np.asarray(diff.mean), np.asarray(diff.se), np.asarray(incr.mean), np.asarray(incr.se)
    )


@dataclass(frozen=True)
class DeviationResult:
    """J^i(deviation, others at equilibrium) - J^i(equilibrium): MC with CRN and analytic."""

    label: str
    delta: float
    se: float
    analytic: float

    @property
    def passed(self) -> bool:
        return self.delta >= -SIGMAS * self.se


def _cost_cfg(cfg: SimConfig, coarsen: int = 1) -> SimConfig:
    """Cost-only run of ``cfg``; ``coarsen`` merges that many steps while keeping the same noise."""
    if cfg.n_steps % coarsen:
        raise ConfigError(f"n_steps={cfg.n_steps} is not divisible by {coarsen}")
    n = cfg.n_steps // coarsen
    return replace(cfg, mean_mode="analytic", n_steps=n, record_every=n, track_costs=True, substeps=cfg.substeps * coarsen)


def _cost_differences(
    game: GameSpec, law: EquilibriumLaw, i: int, devs: Sequence[PlayerLaw], cfg: SimConfig, richardson: bool
) -> Iterator[np.ndarray]:
    """Per-path cost differences (paths x deviations) block by block, under common random numbers.

    With ``richardson`` each block combines the run at ``cfg`` with a run at
    twice the step on the same Brownian path as ``2 fine - coarse``, which
    cancels the first-order time-step bias of the Euler scheme.
    """
    levels = [(_cost_cfg(cfg), 1.0)]
    if richardson:
        levels = [(_cost_cfg(cfg), 2.0), (_cost_cfg(cfg, 2), -1.0)]
    streams = []
    for cc, _ in levels:
        streams.append(iter_blocks(game, law, cc))
        streams.extend(iter_blocks(game, law, cc, dv) for dv in devs)
    k = len(devs) + 1
    for parts in zip(*streams):
        D = 0.0
        for q, (_, w) in enumerate(levels):
            grp = parts[q * k : (q + 1) * k]
            base = grp[0].total_costs(i)
            D = D + w * np.column_stack([e.total_costs(i) - base for e in grp[1:]])
        yield D


def deviation_test(
    law: EquilibriumLaw, i: int, deviations: Sequence[tuple[str, PlayerLaw]], cfg: SimConfig, richardson: bool = False
) -> list[DeviationResult]:
    """Common-random-number MC estimates of each deviation's cost change for player i."""
    game = law.game
    acc = RunningMoments()
    for D in _cost_differences(game, law, i, [dev for _, dev in deviations], cfg, richardson):
        acc.add(D)
    J_eq = analytic_cost(game, i, law)
    mean, se = np.atleast_1d(acc.mean), np.atleast_1d(acc.se)
    out = []
    for q, (label, dev) in enumerate(deviations):
        out.append(DeviationResult(label, float(mean[q]), float(se[q]), analytic_cost(game, i, law, own=dev) - J_eq))
    return out


@dataclass(frozen=True)
class QuadraticFit:
    """Fit of dJ(eps) = c0 + c1 eps + c2 eps^2 over a deviation family; coefficient SEs from per-path fits."""

    eps: np.ndarray
    delta: np.ndarray
    se: np.ndarray
    coef: np.ndarray
    coef_se: np.ndarray
    r2: float

    @property
    def linear(self) -> float:
        return float(self.coef[1])

    @property
    def linear_se(self) -> float:
        return float(self.coef_se[1])

    @property
    def passed(self) -> bool:
        return bool(
            np.all(self.delta >= -SIGMAS * self.se)
            and abs(self.linear) <= SIGMAS * self.linear_se
            and self.r2 >= 0.99
        )


def epsilon_fit(
    law: EquilibriumLaw,
    i: int,
    cfg: SimConfig,
    eps: Iterable[float] = (-0.2, -0.1, 0.1, 0.2),
    dA: np.ndarray | float = 0.0,
    dA_hat: np.ndarray | float = 0.0,
    dc: np.ndarray | float = 1.0,
    dA_ref: np.ndarray | float | None = None,
    richardson: bool = False,
) -> QuadraticFit:
    """Deviations ``equilibrium + eps * (dA, dA_hat, dc, dA_ref)`` of player i and a quadratic fit in eps.

    Coefficient standard errors come from fitting every path separately.
    """
    eps = np.asarray(list(eps), dtype=float)
    game = law.game
    base = law.player(i)
    devs = [
        base.perturbed(e * np.asarray(dA), e * np.asarray(dA_hat), e * np.asarray(dc), dA_ref=None if dA_ref is None else e * np.asarray(dA_ref))
        for e in eps
    ]
    X = np.column_stack([np.ones_like(eps), eps, eps**2])
    Wfit = np.linalg.pinv(X)
    dj, co = RunningMoments(), RunningMoments()
    for D in _cost_differences(game, law, i, devs, cfg, richardson):
        dj.add(D)
        co.add(D @ Wfit.T)
    delta = np.asarray(dj.mean)
    coef = np.asarray(co.mean)
    resid = delta - X @ coef
    tot = np.sum((delta - delta.mean()) ** 2)
    r2 = 1.0 - float(np.sum(resid**2) / tot) if tot > 0 else 1.0
    return QuadraticFit(eps, delta, np.asarray(dj.se), coef, np.asarray(co.se), r2)


def random_perturbations(game: GameSpec, law: EquilibriumLaw, i: int, count: int = 5, scale: float = 0.2, seed: int = 0) -> list[PlayerLaw]:
    """Random affine perturbations of player i's equilibrium law."""
    rng = np.random.Generator(np.random.Philox(key=[seed, 1_000_003 + i]))
    s = game.control_slices()[i]
    di = s.stop - s.start
    out = []
    for _ in range(count):
        dA = scale * rng.standard_normal((di, game.d))
        dAh = scale * rng.standard_normal((di, game.d))
        dc = scale * rng.standard_normal(di)
        out.append(law.player(i).perturbed(dA, dAh, dc))
    return out


# ---------------------------------------------------------------------------
# Deterministic oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleReport:
    """Trajectory comparison against the classical open-loop coupled Riccati solution."""

    times: np.ndarray
    x_pipeline: np.ndarray | None
    x_oracle: np.ndarray | None
    max_deviation: float
    status: str  # "ok", "mismatch" or "oracle_diverged"
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "ok"


def _oracle_solve(game: GameSpec, n_steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Open-loop Nash trajectory of the deterministic game by backward Riccati and forward state RK4.

    With costate lambda_i = Pi_i x + theta_i the first-order conditions give
    a = E x + e with  M E = -(I + b' Pi),  M e = -(L + b' theta),  where row
    block i of M holds N^_ii on the diagonal and the symmetrized cross costs.
    """
    n, d, T, rho = game.n, game.d, game.horizon, game.rho
    sl = game.control_slices()
    da = game.d_a

    def coeffs(t):
        s = sample(game, t)
        M = np.zeros((da, da))
        Iall = np.zeros((da, d))
        Lall = np.zeros(da)
        for i in range(n):
            c = s.costs[i]
            M[sl[i], sl[i]] = c.N_hat[i]
            Iall[sl[i]] = c.I_hat[i]
            Lall[sl[i]] = c.L[i]
            for l in range(n):
                if l == i:
                    continue
                g_il = c.G_hat.get((i, l), np.zeros((sl[i].stop - sl[i].start, sl[l].stop - sl[l].start)))
                g_li = c.G_hat.get((l, i), np.zeros_like(g_il.T))
                M[sl[i], sl[l]] = 0.5 * (g_il + g_li.T)
        return s, M, Iall, Lall

    def feedback(t, Pi, th):
        s, M, Iall, Lall = coeffs(t)
        rhsE = Iall.copy()
        rhse = Lall.copy()
        for i in range(n):
            rhsE[sl[i]] += s.b_hat[i].T @ Pi[i]
            rhse[sl[i]] += s.b_hat[i].T @ th[i]
        return s, -np.linalg.solve(M, rhsE), -np.linalg.solve(M, rhse)

    def rhs(t, Pi, th):
        s, E, e = feedback(t, Pi, th)
        F = s.b_x_hat + s.B_hat @ E
        f = s.beta + s.B_hat @ e
        dPi = np.empty_like(Pi)
        dth = np.empty_like(th)
        for i in range(n):
            c = s.costs[i]
            IE = sum(c.I_hat[k].T @ E[sl[k]] for k in range(n))
            Ie = sum(c.I_hat[k].T @ e[sl[k]] for k in range(n))
            dPi[i] = rho * Pi[i] - c.Q_hat - IE - s.b_x_hat.T @ Pi[i] - Pi[i] @ F
            dth[i] = rho * th[i] - Ie - c.L_x - s.b_x_hat.T @ th[i] - Pi[i] @ f
        return dPi, dth

    h = T / n_steps
    times = np.linspace(0.0, T, n_steps + 1)
    Pi = np.array([p.P + p.P_tilde for p in game.cost.players])
    th = np.array([p.r for p in game.cost.players])
    Pis, ths = [None] * (n_steps + 1), [None] * (n_steps + 1)
    Pis[-1], ths[-1] = Pi, th
    for j in range(n_steps, 0, -1):
        t = times[j]
        k1 = rhs(t, Pi, th)
        k2 = rhs(t - h / 2, Pi - h / 2 * k1[0], th - h / 2 * k1[1])
        k3 = rhs(t - h / 2, Pi - h / 2 * k2[0], th - h / 2 * k2[1])
        k4 = rhs(t - h, Pi - h * k3[0], th - h * k3[1])
        Pi = Pi - h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        th = th - h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if not (np.all(np.isfinite(Pi)) and np.all(np.isfinite(th))):
            raise SolverError(f"oracle Riccati diverged near t={times[j - 1]:.6g}", layer="oracle", t=float(times[j - 1]))
        Pis[j - 1], ths[j - 1] = Pi, th

    def xdot(j2, x):
        # j2 indexes half steps: even -> grid point, odd -> midpoint (averaged coefficients)
        j, odd = divmod(j2, 2)
        if odd:
            # Midpoint coefficients by cubic Hermite from the stored endpoints.
            t0, t1 = times[j], times[j + 1]
            d0, d1 = rhs(t0, Pis[j], ths[j]), rhs(t1, Pis[j + 1], ths[j + 1])
            P_mid = 0.5 * (Pis[j] + Pis[j + 1]) + h / 8 * (d0[0] - d1[0])
            th_mid = 0.5 * (ths[j] + ths[j + 1]) + h / 8 * (d0[1] - d1[1])
            s, E, e = feedback(0.5 * (t0 + t1), P_mid, th_mid)
        else:
            s, E, e = feedback(times[j], Pis[j], ths[j])
        return (s.b_x_hat + s.B_hat @ E) @ x + s.beta + s.B_hat @ e

    xs = np.empty((n_steps + 1, d))
    x = game.x0_mean.copy()
    xs[0] = x
    for j in range(n_steps):
        k1 = xdot(2 * j, x)
        k2 = xdot(2 * j + 1, x + h / 2 * k1)
        k3 = xdot(2 * j + 1, x + h / 2 * k2)
        k4 = xdot(2 * j + 2, x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        xs[j + 1] = x
    return times, xs


def _is_deterministic(game: GameSpec) -> bool:
    dyn = game.dynamics
    paths = list(dyn.gamma) + list(dyn.sigma_x) + list(dyn.sigma_x_tilde)
    for row in list(dyn.sigma) + list(dyn.sigma_tilde):
        paths += list(row)
    return all(np.all(p.values == 0.0) for p in paths) and np.all(game.x0_cov == 0.0)


def oracle_deterministic(law: EquilibriumLaw, n_steps: int | None = None, tol: float = 1e-6) -> OracleReport:
    """Compare the equilibrium mean trajectory with the classical open-loop solution (finite horizon)."""
    game = law.game
    if game.is_infinite:
        raise ConfigError("the deterministic oracle needs a finite horizon")
    if not _is_deterministic(game):
        raise ConfigError("the deterministic oracle needs zero volatility and a deterministic start")
    n_steps = n_steps or max(200, int(math.ceil(game.horizon * 1000)))
    try:
        times, xo = _oracle_solve(game, n_steps)
    except (SolverError, np.linalg.LinAlgError) as exc:
        return OracleReport(np.empty(0), None, None, math.inf, "oracle_diverged", str(exc))
    mp = moment_path(game, law, times)
    dev = float(np.abs(mp.m - xo).max())
    return OracleReport(times, mp.m, xo, dev, "ok" if dev <= tol else "mismatch")


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass
class VerificationReport:
    """Outcome of a verification run; every statistic carries a standard error (zero if analytic)."""

    drift: list[DriftStats] = field(default_factory=list)
    candidate_drift: list[DriftStats] = field(default_factory=list)
    martingale: list[MartingaleStats] = field(default_factory=list)
    perturbed_martingale: list[MartingaleStats] = field(default_factory=list)
    deviations: dict[int, list[DeviationResult]] = field(default_factory=dict)
    fits: dict[int, QuadraticFit] = field(default_factory=dict)
    oracle: OracleReport | None = None
    tol: float = DRIFT_TOL

    def failures(self) -> list[str]:
        out = []
        for s in self.drift:
            if s.max_abs > self.tol:
                out.append(f"player {s.player}: equilibrium drift {s.max_abs:.3g} exceeds {self.tol:.1g}")
        for s in self.candidate_drift:
            if s.max_abs > self.tol:
                out.append(f"player {s.player}: candidate drift {s.max_abs:.3g} exceeds {self.tol:.1g} (best-response gap {s.gap:.6g})")
        for s in self.martingale:
            if not s.flat:
                out.append(f"player {s.player}: E[S_t] not flat (max change {s.flatness:.3g})")
        for s in self.perturbed_martingale:
            if s.monotonicity_violations:
                out.append(f"player {s.player}: E[S_t] decreases at {s.monotonicity_violations} steps under a perturbation")
        for i, res in self.deviations.items():
            for r in res:
                if not r.passed:
                    out.append(f"player {i}: deviation {r.label} lowers cost by {-r.delta:.3g} (se {r.se:.2g})")
        for i, f in self.fits.items():
            if not f.passed:
                out.append(f"player {i}: deviation fit fails (linear {f.linear:.3g} +- {f.linear_se:.2g}, R2 {f.r2:.4f})")
        if self.oracle is not None and not self.oracle.passed:
            out.append(f"oracle: {self.oracle.status} (max deviation {self.oracle.max_deviation:.3g}) {self.oracle.detail}")
        return out

    @property
    def passed(self) -> bool:
        return not self.failures()

    def summary(self) -> dict:
        """Flat key/value summary for structured-text output."""
        out: dict = {"passed": self.passed}
        for s in self.drift:
            out[f"player{s.player}.drift_min"] = s.min
            out[f"player{s.player}.drift_max_abs"] = s.max_abs
            out[f"player{s.player}.drift_route_mismatch"] = s.route_mismatch
        for s in self.candidate_drift:
            out[f"player{s.player}.candidate_drift_max_abs"] = s.max_abs
            out[f"player{s.player}.best_response_gap"] = s.gap
        for s in self.martingale:
            out[f"player{s.player}.martingale_flatness"] = s.flatness
            out[f"player{s.player}.martingale_flatness_se"] = float(s.diff_se[np.argmax(np.abs(s.diff))])
            out[f"player{s.player}.E_S0"] = s.mean_S0
            out[f"player{s.player}.E_S0_se"] = s.se_S0
            out[f"player{s.player}.value"] = s.value
        for s in self.perturbed_martingale:
            inc, se = s.end_increase
            out[f"player{s.player}.perturbed_increase"] = inc
            out[f"player{s.player}.perturbed_increase_se"] = se
            out[f"player{s.player}.monotonicity_violations"] = s.monotonicity_violations
        for i, res in self.deviations.items():
            for r in res:
                out[f"player{i}.deviation[{r.label}]"] = r.delta
                out[f"player{i}.deviation[{r.label}].se"] = r.se
                out[f"player{i}.deviation[{r.label}].analytic"] = r.analytic
        for i, f in self.fits.items():
            out[f"player{i}.fit_linear"] = f.linear
            out[f"player{i}.fit_linear_se"] = f.linear_se
            out[f"player{i}.fit_r2"] = f.r2
        if self.oracle is not None:
            out["oracle.status"] = self.oracle.status
            out["oracle.max_deviation"] = self.oracle.max_deviation
        out["failures"] = self.failures()
        return out


def verify_equilibrium(
    law: EquilibriumLaw,
    cfg: SimConfig | None = None,
    candidate: AffineProfile | None = None,
    tol: float = DRIFT_TOL,
    offsets: Sequence[float] = (-0.1, 0.1),
) -> VerificationReport:
    """Analytic drift for every player; with ``cfg`` also MC flatness and offset deviations.

    With a ``candidate`` profile, the candidate is checked against each
    player's best response instead of the equilibrium law.  Deviation costs
    always use the trapezoid rule, with Richardson extrapolation when
    ``cfg.n_steps`` is even: under common random numbers the left-rule bias
    can exceed a small deviation's true cost change.
    """
    game = law.game
    rep = VerificationReport(tol=tol)
    for i in range(game.n):
        if candidate is None:
            rep.drift.append(equilibrium_drift(law, i))
        else:
            rep.candidate_drift.append(candidate_drift(game, candidate, i, law.rs))
    if cfg is not None and candidate is None:
        for i in range(game.n):
            rep.martingale.append(martingale_check(law, i, cfg))
            s = game.control_slices()[i]
            devs = [(f"offset{e:+g}", law.player(i).perturbed(dc=np.full(s.stop - s.start, e))) for e in offsets]
            devs.append(("gain_x1.5", law.player(i).perturbed(gain_scale=1.5)))
            dev_cfg = replace(cfg, cost_rule="trapezoid")
            rep.deviations[i] = deviation_test(law, i, devs, dev_cfg, richardson=cfg.n_steps % 2 == 0)
    return rep
