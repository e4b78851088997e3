"""
Per-player Riccati layer: the quadratic coefficients K^i (fluctuation) and
Lambda^i (mean) of the value field, and the gain blocks built from them.

With S = N_ii + sum_l s_i' K s_i and U = I_ii + sum_l s_i' K s_x + b_i' K,

    -dK/dt = Q + sum_l s_x' K s_x + K b_x + b_x' K - rho K - U' S^{-1} U,   K_T = P,

and the mean equation is the same with hatted data, K kept in the volatility
terms, and Lambda in the drift terms (V = I^_ii + sum_l s^_i' K s^_x + b^_i' Lambda):

    -dL/dt = Q^ + sum_l s^_x' K s^_x + L b^_x + b^_x' L - rho L - V' S^^{-1} V,  L_T = P^.

Infinite horizon: both right-hand sides vanish; the stationary point is found
by pseudo-time integration from zero and polished by Newton's method.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._numerics import GridPath, guarded_solve, make_grid, rk4_backward, symmetrize
from .errors import ConfigError, SolverError
from .model import CoefficientSnapshot, GameSpec, PSD_TOL, sample

logger = logging.getLogger(__name__)

PSEUDO_STEP = 0.01
MAX_PSEUDO_STEPS = 50_000
STATIONARY_TOL = 1e-10
RESIDUAL_TOL = 1e-9


# ---------------------------------------------------------------------------
# Gain blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlayerGains:
    """Gain blocks of one player at one time; indices ``k``/``(k, l)`` refer to players."""

    S: list[np.ndarray]
    S_hat: list[np.ndarray]
    U: list[np.ndarray]
    V: list[np.ndarray]
    J: dict[tuple[int, int], np.ndarray]
    J_hat: dict[tuple[int, int], np.ndarray]


def player_gains(snap: CoefficientSnapshot, i: int, K: np.ndarray, Lam: np.ndarray) -> PlayerGains:
    c = snap.costs[i]
    n = len(snap.b)
    kap = len(snap.sigma_x)
    S, S_hat, U, V = [], [], [], []
    KSx = [K @ snap.sigma_x[ell] for ell in range(kap)]
    KSxh = [K @ snap.sigma_x_hat[ell] for ell in range(kap)]
    for k in range(n):
        s_k = c.N[k].copy()
        sh_k = c.N_hat[k].copy()
        u_k = c.I[k] + snap.b[k].T @ K
        v_k = c.I_hat[k] + snap.b_hat[k].T @ Lam
        for ell in range(kap):
            sig, sigh = snap.sigma[ell][k], snap.sigma_hat[ell][k]
            s_k = s_k + sig.T @ K @ sig
            sh_k = sh_k + sigh.T @ K @ sigh
            u_k = u_k + sig.T @ KSx[ell]
            v_k = v_k + sigh.T @ KSxh[ell]
        S.append(s_k)
        S_hat.append(sh_k)
        U.append(u_k)
        V.append(v_k)
    J, J_hat = {}, {}
    for k in range(n):
        for l in range(n):
            if k == l:
                continue
            j_kl = c.G.get((k, l))
            jh_kl = c.G_hat.get((k, l))
            j_kl = np.zeros((snap.b[k].shape[1], snap.b[l].shape[1])) if j_kl is None else j_kl.copy()
            jh_kl = np.zeros_like(j_kl) if jh_kl is None else jh_kl.copy()
            for ell in range(kap):
                j_kl = j_kl + snap.sigma[ell][k].T @ K @ snap.sigma[ell][l]
                jh_kl = jh_kl + snap.sigma_hat[ell][k].T @ K @ snap.sigma_hat[ell][l]
            J[(k, l)] = j_kl
            J_hat[(k, l)] = jh_kl
    return PlayerGains(S, S_hat, U, V, J, J_hat)


# ---------------------------------------------------------------------------
# Right-hand sides
# ---------------------------------------------------------------------------


def phi_K(snap: CoefficientSnapshot, i: int, K: np.ndarray) -> np.ndarray:
    """``-dK/dt``; zero at a stationary point."""
    c = snap.costs[i]
    S = c.N[i].copy()
    U = c.I[i] + snap.b[i].T @ K
    out = c.Q + K @ snap.b_x + snap.b_x.T @ K - snap.rho * K
    for ell, sx in enumerate(snap.sigma_x):
        si = snap.sigma[ell][i]
        out = out + sx.T @ K @ sx
        S = S + si.T @ K @ si
        U = U + si.T @ K @ sx
    out = out - U.T @ guarded_solve(S, U, "control cost S", "riccati.K", snap.t)
    return symmetrize(out)


def phi_Lambda(snap: CoefficientSnapshot, i: int, K: np.ndarray, Lam: np.ndarray) -> np.ndarray:
    """``-dLambda/dt``; zero at a stationary point."""
    c = snap.costs[i]
    S = c.N_hat[i].copy()
    V = c.I_hat[i] + snap.b_hat[i].T @ Lam
    out = c.Q_hat + Lam @ snap.b_x_hat + snap.b_x_hat.T @ Lam - snap.rho * Lam
    for ell, sx in enumerate(snap.sigma_x_hat):
        si = snap.sigma_hat[ell][i]
        out = out + sx.T @ K @ sx
        S = S + si.T @ K @ si
        V = V + si.T @ K @ sx
    out = out - V.T @ guarded_solve(S, V, "mean control cost S^", "riccati.Lambda", snap.t)
    return symmetrize(out)


def _dphi_K(snap: CoefficientSnapshot, i: int, K: np.ndarray, E: np.ndarray) -> np.ndarray:
    c = snap.costs[i]
    S = c.N[i].copy()
    U = c.I[i] + snap.b[i].T @ K
    dS = np.zeros_like(S)
    dU = snap.b[i].T @ E
    out = E @ snap.b_x + snap.b_x.T @ E - snap.rho * E
    for ell, sx in enumerate(snap.sigma_x):
        si = snap.sigma[ell][i]
        out = out + sx.T @ E @ sx
        S = S + si.T @ K @ si
        U = U + si.T @ K @ sx
        dS = dS + si.T @ E @ si
        dU = dU + si.T @ E @ sx
    SiU = np.linalg.solve(S, U)
    out = out - dU.T @ SiU - SiU.T @ dU + SiU.T @ dS @ SiU
    return symmetrize(out)


def _dphi_Lambda(snap: CoefficientSnapshot, i: int, K: np.ndarray, Lam: np.ndarray, E: np.ndarray) -> np.ndarray:
    c = snap.costs[i]
    S = c.N_hat[i].copy()
    V = c.I_hat[i] + snap.b_hat[i].T @ Lam
    for ell, sx in enumerate(snap.sigma_x_hat):
        si = snap.sigma_hat[ell][i]
        S = S + si.T @ K @ si
        V = V + si.T @ K @ sx
    dV = snap.b_hat[i].T @ E
    SiV = np.linalg.solve(S, V)
    out = E @ snap.b_x_hat + snap.b_x_hat.T @ E - snap.rho * E - dV.T @ SiV - SiV.T @ dV
    return symmetrize(out)


def _sym_basis(d: int) -> list[np.ndarray]:
    out = []
    for a in range(d):
        for b in range(a, d):
            e = np.zeros((d, d))
            e[a, b] = e[b, a] = 1.0
            out.append(e)
    return out


def _upper(m: np.ndarray) -> np.ndarray:
    return m[np.triu_indices(m.shape[0])]


def _stationary(residual, jvp, d: int, layer: str) -> np.ndarray:
    """Pseudo-time flow ``dM/dtau = residual(M)`` from zero, then Newton polish."""
    basis = _sym_basis(d)
    step = PSEUDO_STEP
    for _attempt in range(4):
        M = np.zeros((d, d))
        ok = True
        for _ in range(MAX_PSEUDO_STEPS):
            k1 = residual(M)
            if np.max(np.abs(k1)) < STATIONARY_TOL:
                break
            k2 = residual(M + 0.5 * step * k1)
            k3 = residual(M + 0.5 * step * k2)
            k4 = residual(M + step * k3)
            M = symmetrize(M + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
            if not np.all(np.isfinite(M)) or np.max(np.abs(M)) > 1e100:
                ok = False
                break
        if ok:
            break
        step /= 4.0
        logger.debug("%s: pseudo flow unstable, retrying with step %g", layer, step)
    else:
        raise SolverError(f"{layer}: stationary Riccati did not converge", layer=layer)
    res0 = np.max(np.abs(residual(M)))
    if res0 > 1e-4:
        raise SolverError(f"{layer}: stationary Riccati did not converge (residual {res0:.3g})", layer=layer)
    for _ in range(20):
        F = _upper(residual(M))
        if np.max(np.abs(F)) < 1e-14 * max(1.0, np.max(np.abs(M))):
            break
        Jm = np.column_stack([_upper(jvp(M, e)) for e in basis])
        delta = np.linalg.solve(Jm, F)
        M = symmetrize(M - sum(c * e for c, e in zip(delta, basis)))
    res = np.max(np.abs(residual(M)))
    if res > RESIDUAL_TOL:
        raise SolverError(f"{layer}: stationary Riccati did not converge (residual {res:.3g})", layer=layer)
    return M


# ---------------------------------------------------------------------------
# Public solvers
# ---------------------------------------------------------------------------


def _check_psd(path: GridPath, name: str, i: int) -> None:
    vals = path.values if path.grid is not None else path.values[None]
    for j, m in enumerate(vals):
        e = np.linalg.eigvalsh(m).min()
        if e < -PSD_TOL * max(1.0, float(np.max(np.abs(m)))):
            t = None if path.grid is None else float(path.grid[j])
            raise SolverError(
                f"{name} of player {i} lost positive semidefiniteness (min eigenvalue {e:.3g})"
                + ("" if t is None else f" at t={t:.6g}"),
                layer=f"riccati.{name}",
                t=t,
            )


def default_grid(game: GameSpec, steps_per_unit: int | None = None) -> np.ndarray:
    if game.is_infinite:
        raise ConfigError("infinite-horizon games have no default solver grid")
    from ._numerics import DEFAULT_STEPS_PER_UNIT

    return make_grid(game.horizon, steps_per_unit or DEFAULT_STEPS_PER_UNIT, game.knots())


def solve_K(game: GameSpec, i: int, grid: np.ndarray | None = None) -> GridPath:
    """Backward RK4 for K^i from ``K_T = P^i``; constant for infinite horizon."""
    if game.is_infinite:
        return GridPath.constant(solve_K_infinite(game, i))
    grid = default_grid(game) if grid is None else np.asarray(grid, dtype=float)
    _check_grid(game, grid)
    path = rk4_backward(
        lambda t, K: -phi_K(sample(game, t), i, K),
        grid,
        game.cost.players[i].P,
        project=symmetrize,
        layer="riccati.K",
    )
    _check_psd(path, "K", i)
    return path


def solve_Lambda(game: GameSpec, i: int, K: GridPath, grid: np.ndarray | None = None) -> GridPath:
    """Backward RK4 for Lambda^i from ``Lambda_T = P^i + P~^i``, reading K^i along the way."""
    if game.is_infinite:
        return GridPath.constant(solve_Lambda_infinite(game, i, K(0.0)))
    grid = default_grid(game) if grid is None else np.asarray(grid, dtype=float)
    _check_grid(game, grid)
    pc = game.cost.players[i]
    path = rk4_backward(
        lambda t, L: -phi_Lambda(sample(game, t), i, K(t), L),
        grid,
        pc.P + pc.P_tilde,
        project=symmetrize,
        layer="riccati.Lambda",
    )
    _check_psd(path, "Lambda", i)
    return path


def solve_K_infinite(game: GameSpec, i: int) -> np.ndarray:
    """Stationary K^i >= 0 with algebraic residual <= 1e-9."""
    snap = sample(game, 0.0)
    K = _stationary(
        lambda M: phi_K(snap, i, M),
        lambda M, E: _dphi_K(snap, i, M, E),
        game.d,
        "riccati.K",
    )
    _check_psd(GridPath.constant(K), "K", i)
    return K


def solve_Lambda_infinite(game: GameSpec, i: int, K: np.ndarray) -> np.ndarray:
    snap = sample(game, 0.0)
    L = _stationary(
        lambda M: phi_Lambda(snap, i, K, M),
        lambda M, E: _dphi_Lambda(snap, i, K, M, E),
        game.d,
        "riccati.Lambda",
    )
    _check_psd(GridPath.constant(L), "Lambda", i)
    return L


def _check_grid(game: GameSpec, grid: np.ndarray) -> None:
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ConfigError("solver grid must be strictly increasing with at least two points")
    if abs(grid[0]) > 1e-12 or abs(grid[-1] - game.horizon) > 1e-9 * max(1.0, game.horizon):
        raise ConfigError(f"solver grid must span [0, {game.horizon}]")


@dataclass(frozen=True)
class RiccatiSolution:
    """K^i and Lambda^i for every player; ``grid`` is None for infinite horizon."""

    grid: np.ndarray | None
    K: tuple[GridPath, ...]
    Lam: tuple[GridPath, ...]

    @property
    def is_infinite(self) -> bool:
        return self.grid is None

    def K_at(self, i: int, t: float) -> np.ndarray:
        return self.K[i](t)

    def Lam_at(self, i: int, t: float) -> np.ndarray:
        return self.Lam[i](t)


def solve_riccati(game: GameSpec, grid: np.ndarray | None = None) -> RiccatiSolution:
    """Solve K^i and Lambda^i for all players."""
    if game.is_infinite:
        K = tuple(GridPath.constant(solve_K_infinite(game, i)) for i in range(game.n))
        L = tuple(GridPath.constant(solve_Lambda_infinite(game, i, K[i].values)) for i in range(game.n))
        return RiccatiSolution(None, K, L)
    grid = default_grid(game) if grid is None else np.asarray(grid, dtype=float)
    K = tuple(solve_K(game, i, grid) for i in range(game.n))
    L = tuple(solve_Lambda(game, i, K[i], grid) for i in range(game.n))
    return RiccatiSolution(grid, K, L)


@dataclass(frozen=True)
class DerivedGains:
    """Gain blocks of every player at time ``t``; ``players[i].S[k]`` is S^i_k."""

    t: float
    players: tuple[PlayerGains, ...]


def derived_gains(game: GameSpec, rs: RiccatiSolution, t: float) -> DerivedGains:
    snap = sample(game, t)
    return DerivedGains(
        float(t), tuple(player_gains(snap, i, rs.K_at(i, t), rs.Lam_at(i, t)) for i in range(game.n))
    )


def algebraic_residual(game: GameSpec, i: int, K: np.ndarray, Lam: np.ndarray | None = None) -> float:
    """Max-norm residual of the stationary equations at (K, Lambda)."""
    snap = sample(game, 0.0)
    r = float(np.max(np.abs(phi_K(snap, i, K))))
    if Lam is not None:
        r = max(r, float(np.max(np.abs(phi_Lambda(snap, i, K, Lam)))))
    return r
