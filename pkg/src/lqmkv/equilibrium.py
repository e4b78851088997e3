"""
Nash equilibrium laws, single-player best responses and equilibrium values.

An affine law profile maps time to ``(A, A_hat, c)`` with
``alpha = A (x - xbar) + A_hat xbar + c`` (rows stacked over players).  The
equilibrium law comes from the Riccati and fixed-point layers; the best
response is computed independently from per-player linear ODEs in which the
opponents' controls are fixed processes of a reference state.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from . import _moments as mom
from ._numerics import GridPath, make_grid, rk4_backward, simpson_weights
from .errors import ConfigError
from .meanfield_fixedpoint import BlockCache, FixedPointSolution, eta_system, gain_A, gain_A_hat, intercept, pi_rhs, solve_fixed_point
from .model import AssumptionReport, GameSpec, sample, validate_assumptions
from .riccati import RiccatiSolution, phi_K, phi_Lambda, player_gains, solve_riccati

logger = logging.getLogger(__name__)

Gains = tuple[np.ndarray, np.ndarray, np.ndarray]


class AffineProfile(Protocol):
    game: GameSpec

    def gains(self, t: float) -> Gains: ...

    @property
    def is_constant(self) -> bool: ...


@dataclass(frozen=True)
class StaticProfile:
    """Time-invariant affine profile (e.g. every player plays zero)."""

    game: GameSpec
    A: np.ndarray
    A_hat: np.ndarray
    c: np.ndarray

    @classmethod
    def zero(cls, game: GameSpec) -> "StaticProfile":
        return cls(game, np.zeros((game.d_a, game.d)), np.zeros((game.d_a, game.d)), np.zeros(game.d_a))

    @property
    def is_constant(self) -> bool:
        return True

    def gains(self, t: float) -> Gains:
        return self.A, self.A_hat, self.c


@dataclass(frozen=True)
class PlayerLaw:
    """Affine law of one player: ``alpha_i = A (x - xbar) + A_hat xbar + c``.

    ``A_ref`` optionally adds ``A_ref (x^r - E x^r)``, a term driven by the
    reference state, which the deviation leaves untouched (an open-loop
    perturbation of the control process).
    """

    player: int
    A: Callable[[float], np.ndarray]
    A_hat: Callable[[float], np.ndarray]
    c: Callable[[float], np.ndarray]
    A_ref: Callable[[float], np.ndarray] | None = None

    def gains(self, t: float) -> Gains:
        return self.A(t), self.A_hat(t), self.c(t)

    def full_gains(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray | None]:
        return self.A(t), self.A_hat(t), self.c(t), None if self.A_ref is None else self.A_ref(t)

    def __call__(self, x: np.ndarray, xbar: np.ndarray, t: float) -> np.ndarray:
        A, Ah, c = self.gains(t)
        return (np.asarray(x) - xbar) @ A.T + xbar @ Ah.T + c

    def perturbed(
        self,
        dA: np.ndarray | float = 0.0,
        dA_hat: np.ndarray | float = 0.0,
        dc: np.ndarray | float = 0.0,
        gain_scale: float = 1.0,
        dA_ref: np.ndarray | float | None = None,
    ) -> "PlayerLaw":
        """Law with gains ``gain_scale * A + dA``, ``gain_scale * A_hat + dA_hat``, intercept ``c + dc``
        and reference-state gain ``A_ref + dA_ref``."""
        A, Ah, c, Ar = self.A, self.A_hat, self.c, self.A_ref
        ref = None
        if dA_ref is not None or Ar is not None:
            da = 0.0 if dA_ref is None else dA_ref
            ref = (lambda t: Ar(t) + da) if Ar is not None else (lambda t: np.zeros_like(A(t)) + da)
        return PlayerLaw(
            self.player,
            lambda t: gain_scale * A(t) + dA,
            lambda t: gain_scale * Ah(t) + dA_hat,
            lambda t: c(t) + dc,
            ref,
        )


@dataclass(frozen=True)
class TabulatedProfile:
    """Affine profile given on a time table, linearly interpolated (held beyond the last row)."""

    game: GameSpec
    times: np.ndarray
    A: np.ndarray
    A_hat: np.ndarray
    c: np.ndarray

    def __post_init__(self) -> None:
        m, da, d = self.times.size, self.game.d_a, self.game.d
        if self.A.shape != (m, da, d) or self.A_hat.shape != (m, da, d) or self.c.shape != (m, da):
            raise ConfigError(f"law table shapes do not match {m} rows of ({da} x {d}) gains")
        if m > 1 and np.any(np.diff(self.times) <= 0.0):
            raise ConfigError("law table times must be strictly increasing")

    @property
    def is_constant(self) -> bool:
        return self.times.size == 1

    def gains(self, t: float) -> Gains:
        if self.is_constant or t <= self.times[0]:
            return self.A[0], self.A_hat[0], self.c[0]
        if t >= self.times[-1]:
            return self.A[-1], self.A_hat[-1], self.c[-1]
        j = int(np.searchsorted(self.times, t, side="right")) - 1
        w = (t - self.times[j]) / (self.times[j + 1] - self.times[j])
        lerp = lambda v: (1.0 - w) * v[j] + w * v[j + 1]  # noqa: E731
        return lerp(self.A), lerp(self.A_hat), lerp(self.c)


@dataclass(frozen=True)
class OverrideProfile:
    """``base`` with one player's rows replaced by ``law``."""

    base: AffineProfile
    law: PlayerLaw

    @property
    def game(self) -> GameSpec:
        return self.base.game

    @property
    def is_constant(self) -> bool:
        return False

    def gains(self, t: float) -> Gains:
        A, Ah, c = (np.array(v, copy=True) for v in self.base.gains(t))
        s = self.game.control_slices()[self.law.player]
        A[s], Ah[s], c[s] = self.law.gains(t)
        return A, Ah, c


class EquilibriumLaw:
    """Equilibrium feedback: ``alpha - E alpha = A_x (X - E X) + R - E R``, ``E alpha = A^_x E X + R^``.

    With deterministic coefficients ``R - E R`` vanishes and ``R^ = c``.
    """

    def __init__(
        self,
        game: GameSpec,
        rs: RiccatiSolution,
        fp: FixedPointSolution,
        blocks: BlockCache,
        report: AssumptionReport | None = None,
    ):
        self.game = game
        self.rs = rs
        self.fp = fp
        self.blocks = blocks
        self.report = report
        self._cache: dict[float, Gains] = {}

    @property
    def grid(self) -> np.ndarray | None:
        return self.rs.grid

    @property
    def is_constant(self) -> bool:
        return self.rs.is_infinite and self.fp.eta.is_constant

    def gains(self, t: float) -> Gains:
        t = float(t)
        key = 0.0 if self.is_constant else t
        g = self._cache.get(key)
        if g is None:
            blk = self.blocks(t)
            pi, ph, y = self.fp.pi(t), self.fp.pi_hat(t), self.fp.eta(t)
            g = (gain_A(blk, pi), gain_A_hat(blk, pi, ph), intercept(blk, pi, y))
            if len(self._cache) < 500_000:
                self._cache[key] = g
        return g

    def A_x(self, t: float) -> np.ndarray:
        return self.gains(t)[0]

    def A_hat_x(self, t: float) -> np.ndarray:
        return self.gains(t)[1]

    def R(self, t: float) -> np.ndarray:
        return np.zeros(self.game.d_a)

    def R_hat(self, t: float) -> np.ndarray:
        return self.gains(t)[2]

    def control(self, x: np.ndarray, xbar: np.ndarray, t: float) -> np.ndarray:
        """Stacked controls of all players at state(s) ``x`` with mean ``xbar``."""
        A, Ah, c = self.gains(t)
        return (np.asarray(x) - xbar) @ A.T + xbar @ Ah.T + c

    def player(self, i: int) -> PlayerLaw:
        s = self.game.control_slices()[i]
        return PlayerLaw(i, lambda t: self.gains(t)[0][s], lambda t: self.gains(t)[1][s], lambda t: self.gains(t)[2][s])

    def field(self, i: int, t: float) -> mom.FieldValues:
        """Value-field coefficients of player i at t, with derivatives from their equations."""
        t = float(t)
        d = self.game.d
        rows = slice(i * d, (i + 1) * d)
        snap = sample(self.game, t)
        blk = self.blocks(t)
        K, Lam = self.rs.K_at(i, t), self.rs.Lam_at(i, t)
        pi, ph, y = self.fp.pi(t), self.fp.pi_hat(t), self.fp.eta(t)
        dpi, dph = pi_rhs(blk, pi, ph)
        M, f = eta_system(blk, pi, ph)
        dy = M @ y + f
        return mom.FieldValues(
            K=K,
            Lam=Lam,
            p=pi[rows],
            ph=ph[rows],
            y=y[rows],
            dK=-phi_K(snap, i, K),
            dLam=-phi_Lambda(snap, i, K, Lam),
            dp=dpi[rows],
            dph=dph[rows],
            dy=dy[rows],
        )

    def tabulate(self, times: np.ndarray) -> dict[str, np.ndarray]:
        """Gains on ``times``: arrays ``A`` (m x d_A x d), ``A_hat``, ``R``, ``R_hat``."""
        g = [self.gains(float(t)) for t in times]
        return {
            "A": np.array([x[0] for x in g]),
            "A_hat": np.array([x[1] for x in g]),
            "R": np.zeros((len(g), self.game.d_a)),
            "R_hat": np.array([x[2] for x in g]),
        }


def solve_nash(game: GameSpec, grid: np.ndarray | None = None, steps_per_unit: int | None = None) -> EquilibriumLaw:
    """Riccati layer, then the (pi, pi_hat, eta) fixed point, then the feedback law.

    Solver failures propagate as :class:`SolverError` naming the layer and time.
    Failed standing assumptions are logged and kept on ``law.report``.
    """
    report = validate_assumptions(game)
    for c in report.failures():
        logger.warning("assumption %s (player %s) fails with margin %.3g", c.name, c.player, c.margin)
    if grid is None and not game.is_infinite and steps_per_unit is not None:
        grid = make_grid(game.horizon, steps_per_unit, game.knots())
    rs = solve_riccati(game, grid)
    blocks = BlockCache(game, rs)
    fp = solve_fixed_point(game, rs, blocks)
    return EquilibriumLaw(game, rs, fp, blocks, report)


# ---------------------------------------------------------------------------
# Best response
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BestResponseLaw:
    """Player i's best response to opponents playing ``reference`` on the reference state.

    The control is ``-S^{-1}(U x~ + Xi x~^r) - S^^{-1}(V xbar + O xbar^r + o)``:
    the first part is the fluctuation map (a^{i,0}), the second the mean map
    (a^{i,1}).  When the own state coincides with the reference state the law
    collapses to the gains returned by :meth:`coinciding_gains`.
    """

    game: GameSpec
    player: int
    rs: RiccatiSolution
    reference: AffineProfile
    p: GridPath
    p_hat: GridPath
    y: GridPath

    def coefficients(self, t: float) -> mom.BestResponseCoefficients:
        i = self.player
        return mom.br_coefficients(
            sample(self.game, t),
            i,
            self.game.control_slices(),
            self.rs.K_at(i, t),
            self.rs.Lam_at(i, t),
            self.p(t),
            self.p_hat(t),
            self.y(t),
            self.reference.gains(t),
        )

    def field(self, t: float) -> mom.FieldValues:
        """Value-field coefficients of player i against the reference profile."""
        i, d = self.player, self.game.d
        snap = sample(self.game, t)
        K, Lam = self.rs.K_at(i, t), self.rs.Lam_at(i, t)
        p, ph, y = self.p(t), self.p_hat(t), self.y(t)
        dz = _br_rhs(self.game, i, self.rs, self.reference, t, np.concatenate([p.ravel(), ph.ravel(), y]))
        return mom.FieldValues(
            K=K,
            Lam=Lam,
            p=p,
            ph=ph,
            y=y,
            dK=-phi_K(snap, i, K),
            dLam=-phi_Lambda(snap, i, K, Lam),
            dp=dz[: d * d].reshape(d, d),
            dph=dz[d * d : 2 * d * d].reshape(d, d),
            dy=dz[2 * d * d :],
        )

    def coinciding_gains(self, t: float) -> Gains:
        return self.coefficients(t).coinciding()

    def control(self, x, xbar, x_ref, xbar_ref, t: float) -> np.ndarray:
        co = self.coefficients(t)
        fl = (np.asarray(x) - xbar) @ co.U.T + (np.asarray(x_ref) - xbar_ref) @ co.Xi.T
        mn = xbar @ co.V.T + xbar_ref @ co.O.T + co.o
        return -np.linalg.solve(co.S, np.atleast_2d(fl).T).T.reshape(np.shape(fl)) - np.linalg.solve(
            co.S_hat, np.atleast_1d(mn)
        )


def _br_rhs(game: GameSpec, i: int, rs: RiccatiSolution, ref: AffineProfile, t: float, z: np.ndarray) -> np.ndarray:
    d = game.d
    sl = game.control_slices()
    p = z[: d * d].reshape(d, d)
    ph = z[d * d : 2 * d * d].reshape(d, d)
    y = z[2 * d * d :]
    snap = sample(game, t)
    K, Lam = rs.K_at(i, t), rs.Lam_at(i, t)
    A, Ah, c = ref.gains(t)
    co = mom.br_coefficients(snap, i, sl, K, Lam, p, ph, y, (A, Ah, c))
    g = player_gains(snap, i, K, Lam)
    cs = snap.costs[i]
    rho = snap.rho
    dp = -p @ (snap.b_x + snap.B @ A) - snap.b_x.T @ p + rho * p + co.U.T @ np.linalg.solve(co.S, co.Xi)
    dph = (
        -ph @ (snap.b_x_hat + snap.B_hat @ Ah)
        - snap.b_x_hat.T @ ph
        + rho * ph
        + co.V.T @ np.linalg.solve(co.S_hat, co.O)
    )
    dy = (
        -ph @ (snap.beta + snap.B_hat @ c)
        - cs.L_x
        - Lam @ snap.beta
        - snap.b_x_hat.T @ y
        + rho * y
        + co.V.T @ np.linalg.solve(co.S_hat, co.o)
    )
    for k, s in enumerate(sl):
        if k != i:
            dp -= g.U[k].T @ A[s]
            dph -= g.V[k].T @ Ah[s]
            dy -= g.V[k].T @ c[s]
    for ell in range(len(snap.sigma_x)):
        sx, sxh = snap.sigma_x[ell], snap.sigma_x_hat[ell]
        dp -= sx.T @ p @ (sx + snap.Sig[ell] @ A)
        dph -= sxh.T @ p @ (sxh + snap.Sig_hat[ell] @ Ah)
        dy -= sxh.T @ (K @ snap.gamma[ell] + p @ (snap.gamma[ell] + snap.Sig_hat[ell] @ c))
    return np.concatenate([dp.ravel(), dph.ravel(), dy])


def _br_stationary(game: GameSpec, i: int, rs: RiccatiSolution, ref: AffineProfile, t: float) -> np.ndarray:
    d = game.d
    size = 2 * d * d + d
    f0 = _br_rhs(game, i, rs, ref, t, np.zeros(size))
    M = np.column_stack([_br_rhs(game, i, rs, ref, t, e) - f0 for e in np.eye(size)])
    return np.linalg.solve(M, -f0)


def best_response(game: GameSpec, i: int, reference: AffineProfile, rs: RiccatiSolution | None = None) -> BestResponseLaw:
    """Best response of player ``i`` when opponents play ``reference`` on the reference state.

    Finite horizon: backward RK4 of the linear (p, p_hat, y) system from
    (0, 0, r^i).  Infinite horizon: the stationary solution for constant data,
    else backward RK4 from the stationary value at the last coefficient knot.
    """
    if not 0 <= i < game.n:
        raise ConfigError(f"player index {i} out of range")
    rs = rs or solve_riccati(game)
    d = game.d

    def unpack(path: GridPath) -> tuple[GridPath, GridPath, GridPath]:
        if path.grid is None:
            v = path.values
            return (
                GridPath.constant(v[: d * d].reshape(d, d)),
                GridPath.constant(v[d * d : 2 * d * d].reshape(d, d)),
                GridPath.constant(v[2 * d * d :]),
            )
        n = path.grid.size
        v, dv = path.values, path.derivs
        return (
            GridPath(path.grid, v[:, : d * d].reshape(n, d, d), dv[:, : d * d].reshape(n, d, d), path.hold),
            GridPath(path.grid, v[:, d * d : 2 * d * d].reshape(n, d, d), dv[:, d * d : 2 * d * d].reshape(n, d, d), path.hold),
            GridPath(path.grid, v[:, 2 * d * d :], dv[:, 2 * d * d :], path.hold),
        )

    def rhs(t: float, z: np.ndarray) -> np.ndarray:
        return _br_rhs(game, i, rs, reference, t, z)

    if game.is_infinite:
        knots = game.knots()
        if knots.size <= 1 and reference.is_constant:
            path = GridPath.constant(_br_stationary(game, i, rs, reference, 0.0))
        else:
            t_last = max(float(knots[-1]), _last_time(reference))
            z_end = _br_stationary(game, i, rs, reference, t_last)
            g = make_grid(t_last, 2000, knots)
            path = rk4_backward(rhs, g, z_end, layer="best_response")
            path = GridPath(path.grid, path.values, path.derivs, hold=True)
    else:
        term = np.concatenate([np.zeros(2 * d * d), game.cost.players[i].r])
        path = rk4_backward(rhs, rs.grid, term, layer="best_response")
    p, ph, y = unpack(path)
    return BestResponseLaw(game, i, rs, reference, p, ph, y)


def _last_time(profile: AffineProfile) -> float:
    fp = getattr(profile, "fp", None)
    if fp is not None and fp.eta.grid is not None:
        return float(fp.eta.grid[-1])
    return 0.0


# ---------------------------------------------------------------------------
# Values, mean and dispersion
# ---------------------------------------------------------------------------


def moment_grid(game: GameSpec, law: AffineProfile | None = None) -> np.ndarray:
    """Grid for moment ODEs: the solver grid (finite) or a truncation at ~30/rho (infinite)."""
    if not game.is_infinite:
        rs = getattr(law, "rs", None)
        if rs is not None and rs.grid is not None:
            return rs.grid
        return make_grid(game.horizon, 2000, game.knots())
    if game.rho <= 0.0:
        raise ConfigError("infinite-horizon values need a positive discount rate")
    t_end = max(30.0 / game.rho, float(game.knots()[-1]))
    return make_grid(t_end, 200, game.knots())


def h_at(game: GameSpec, i: int, snap, fv: mom.FieldValues, ref: Gains, mr: np.ndarray, C: np.ndarray) -> float:
    """State-free part of the field's drift: its value with player i's own state at zero.

    The own control is then the best response at zero own state,
    ``-S^{-1} Xi x~^r - S^^{-1}(O xbar^r + o)``.
    """
    sl = game.control_slices()
    d = game.d
    co = mom.br_coefficients(snap, i, sl, fv.K, fv.Lam, fv.p, fv.ph, fv.y, ref)
    own_L = np.hstack([np.zeros((co.S.shape[0], d)), co.ref_gain()])
    own_m = -np.linalg.solve(co.S_hat, co.O @ mr + co.o)
    Cz = C.copy()
    Cz[:d, :] = 0.0
    Cz[:, :d] = 0.0
    zero = np.zeros(d)
    sc = mom.scenario(snap, i, sl, ref, own_L, own_m, zero, mr)
    return mom.expected_drift_without_R(snap, i, sl, sc, fv, Cz, zero, mr)


FieldFn = Callable[[float], mom.FieldValues]


def R_path(game: GameSpec, i: int, field_fn: FieldFn, ref: AffineProfile, mp: mom.MomentPath) -> GridPath:
    """R^i on every other point of the moment grid: dR/dt = rho R - h, R_T = 0 (finite) or bounded (infinite).

    Backward recursion with Simpson's rule on pairs of grid intervals; the
    infinite-horizon truncation adds the stationary tail h / rho.
    """
    g = mp.grid
    h = np.array([h_at(game, i, sample(game, float(t)), field_fn(float(t)), ref.gains(float(t)), mp.mr[j], mp.C[j]) for j, t in enumerate(g)])
    rho = game.rho
    idx = list(range(g.size - 1, -1, -2))
    if idx[-1] != 0:
        idx.append(0)
    idx = idx[::-1]
    R = np.zeros(len(idx))
    R[-1] = h[-1] / rho if game.is_infinite else 0.0
    for q in range(len(idx) - 2, -1, -1):
        a, b = idx[q], idx[q + 1]
        nodes = g[a : b + 1]
        w = simpson_weights(nodes)
        R[q] = math.exp(-rho * (g[b] - g[a])) * R[q + 1] + float(np.sum(w * np.exp(-rho * (nodes - g[a])) * h[a : b + 1]))
    return GridPath(g[idx], R, rho * R - h[idx], hold=game.is_infinite)


def moment_path(
    game: GameSpec, law: AffineProfile, grid: np.ndarray | None = None, i: int | None = None, own: PlayerLaw | None = None
) -> mom.MomentPath:
    """Moments of the own state (player ``i`` on ``own``) and of the reference state under ``law``."""
    grid = moment_grid(game, law) if grid is None else grid
    return mom.moment_path(game, law.gains, grid, i, None if own is None else own.full_gains)


def value(game: GameSpec, i: int, law: EquilibriumLaw, mp: mom.MomentPath | None = None) -> float:
    """J^i = tr(K_0 C_0) + xbar_0' L_0 xbar_0 + 2 [tr(p_0 C_0) + (p^_0 xbar_0 + y_0)' xbar_0] + R_0."""
    mp = mp or moment_path(game, law)
    fv = law.field(i, 0.0)
    R0 = float(R_path(game, i, lambda t: law.field(i, t), law, mp).values[0])
    x0, C0 = game.x0_mean, game.x0_cov
    return float(
        np.trace(fv.K @ C0) + x0 @ fv.Lam @ x0 + 2.0 * (np.trace(fv.p @ C0) + (fv.ph @ x0 + fv.y) @ x0) + R0
    )


def analytic_cost(game: GameSpec, i: int, law: AffineProfile, own: PlayerLaw | None = None, mp: mom.MomentPath | None = None) -> float:
    """J^i by quadrature of E f^i over the moment path (independent of the value field).

    ``own`` replaces player i's law on its own state; opponents keep playing
    ``law`` on the reference state.  Infinite horizon adds the tail
    ``e^{-rho t_end} E f(t_end) / rho``.
    """
    mp = mp or moment_path(game, law, None, i, own)
    sl = game.control_slices()
    d = game.d
    vals = np.empty(mp.grid.size)
    for j, t in enumerate(mp.grid):
        t = float(t)
        snap = sample(game, t)
        m = mp.m[j]
        if own is None:
            sc = mom.scenario(snap, None, sl, law.gains(t), None, None, m, mp.mr[j])
        else:
            oL, om = mom.own_form(own.full_gains(t), d, m)
            sc = mom.scenario(snap, i, sl, law.gains(t), oL, om, m, mp.mr[j])
        vals[j] = mom.expected_running_cost(snap, i, sl, sc, mp.C[j], m)
    disc = np.exp(-game.rho * mp.grid)
    total = float(np.sum(simpson_weights(mp.grid) * disc * vals))
    if game.is_infinite:
        total += disc[-1] * vals[-1] / game.rho
    else:
        pc = game.cost.players[i]
        m = mp.m[-1]
        C = mp.C[-1][:d, :d]
        g_T = np.trace(pc.P @ C) + m @ (pc.P + pc.P_tilde) @ m + 2.0 * pc.r @ m
        total += disc[-1] * g_T
    return total


def mean_state_path(game: GameSpec, law: AffineProfile, grid: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(grid, E X_t) under ``law``."""
    mp = moment_path(game, law, grid)
    return mp.grid, mp.m


def dispersion_path(game: GameSpec, law: AffineProfile, grid: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(grid, Cov(X_t)) under ``law``."""
    mp = moment_path(game, law, grid)
    return mp.grid, mp.own_cov()
