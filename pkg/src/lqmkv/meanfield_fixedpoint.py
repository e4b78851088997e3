"""
Stacked fixed-point layer.

The adjoint vector of all players is sought as Y = pi (X - E X) + pi_hat E X + eta
with pi, pi_hat of shape (n d) x d and eta of length n d (player i owns rows
i*d:(i+1)*d).  Given the Riccati solution, the stacked block coefficients
(:class:`BlockSystem`) turn the equilibrium first-order conditions into

    alpha - E alpha = A (X - E X),   E alpha = A_hat E X + c,

    A     = (I - sum_l S_z^l pi Sig^l)^{-1} (S_x + S_y pi + sum_l S_z^l pi s_x^l)
    A_hat = (I - sum_l S^_z^l pi Sig^^l)^{-1} (S^_x + S^_y pi_hat + sum_l S^_z^l pi s^_x^l)
    c     = (I - sum_l S^_z^l pi Sig^^l)^{-1} (S^_y eta + H^ + sum_l S^_z^l pi gamma^l)

and the backward system

    d pi/dt     = -pi b_x + P_y pi + sum P_z pi s_x + (P_a + sum P_z pi Sig) A - pi B A
    d pi_hat/dt = -pi_hat b^_x + P^_y pi_hat + sum P^_z pi s^_x
                  + (P^_a + sum P^_z pi Sig^) A_hat - pi_hat B^ A_hat
    d eta/dt    = P^_y eta + W c + sum P^_z pi gamma - pi_hat beta + F^,
                  W = sum P^_z pi Sig^ + P^_a - pi_hat B^

with pi_T = pi_hat_T = 0 and eta_T = (r^i)_i.  With deterministic coefficients
the fluctuation part of eta vanishes identically, so ``eta`` is deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from ._numerics import GridPath, block_diag, checked_inv, guarded_solve, rk4_backward, simpson_weights
from .errors import ConfigError, SolverError
from .model import CoefficientSnapshot, GameSpec, sample
from .riccati import RiccatiSolution, player_gains

logger = logging.getLogger(__name__)

PSEUDO_STEP = 0.01
MAX_PSEUDO_STEPS = 50_000
STATIONARY_TOL = 1e-10
RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class BlockSystem:
    """Stacked coefficients at one time (unhatted: fluctuation system, hatted: mean system).

    Shapes: d_A = sum d_i control rows, n d adjoint rows.  ``S_inv`` is the
    block-diagonal of (S^i_ii)^{-1}; ``Jbar`` holds the symmetrized cross blocks
    (J^i_ik + J^i_ki') / 2; ``calJ = -(I + S_inv Jbar)^{-1} S_inv``.
    """

    t: float
    S_inv: np.ndarray
    S_inv_hat: np.ndarray
    Jbar: np.ndarray
    Jbar_hat: np.ndarray
    calJ: np.ndarray
    calJ_hat: np.ndarray
    S_x: np.ndarray
    S_x_hat: np.ndarray
    S_y: np.ndarray
    S_y_hat: np.ndarray
    S_z: list[np.ndarray]
    S_z_hat: list[np.ndarray]
    H: np.ndarray
    H_hat: np.ndarray
    P_y: np.ndarray
    P_y_hat: np.ndarray
    P_z: list[np.ndarray]
    P_z_hat: list[np.ndarray]
    P_a: np.ndarray
    P_a_hat: np.ndarray
    F: np.ndarray
    F_hat: np.ndarray
    cond: float
    cond_hat: float
    snap: CoefficientSnapshot = field(repr=False)


def _assemble(game: GameSpec, snap: CoefficientSnapshot, Ks: list[np.ndarray], Lams: list[np.ndarray]) -> BlockSystem:
    n, d, t = game.n, game.d, snap.t
    sl = game.control_slices()
    d_a = game.d_a
    kap = game.kappa
    gains = [player_gains(snap, i, Ks[i], Lams[i]) for i in range(n)]
    layer = "fixedpoint.blocks"
    Sii_inv = [checked_inv(g.S[i], f"S^{i}_{i}", layer, t) for i, g in enumerate(gains)]
    Shii_inv = [checked_inv(g.S_hat[i], f"S^^{i}_{i}", layer, t) for i, g in enumerate(gains)]
    S_inv = block_diag(*Sii_inv)
    S_inv_hat = block_diag(*Shii_inv)
    Jbar = np.zeros((d_a, d_a))
    Jbar_hat = np.zeros((d_a, d_a))
    for i, g in enumerate(gains):
        for k in range(n):
            if k != i:
                Jbar[sl[i], sl[k]] = 0.5 * (g.J[(i, k)] + g.J[(k, i)].T)
                Jbar_hat[sl[i], sl[k]] = 0.5 * (g.J_hat[(i, k)] + g.J_hat[(k, i)].T)
    eye_a = np.eye(d_a)
    m = eye_a + S_inv @ Jbar
    m_hat = eye_a + S_inv_hat @ Jbar_hat
    m_inv = checked_inv(m, "I + S J", layer, t)
    m_hat_inv = checked_inv(m_hat, "I + S^ J^", layer, t)
    cond = float(np.abs(m).sum(axis=0).max() * np.abs(m_inv).sum(axis=0).max())
    cond_hat = float(np.abs(m_hat).sum(axis=0).max() * np.abs(m_hat_inv).sum(axis=0).max())
    calJ = -m_inv @ S_inv
    calJ_hat = -m_hat_inv @ S_inv_hat

    U_st = np.vstack([g.U[i] for i, g in enumerate(gains)])
    V_st = np.vstack([g.V[i] for i, g in enumerate(gains)])
    bT = block_diag(*[b.T for b in snap.b])
    bhT = block_diag(*[b.T for b in snap.b_hat])
    sT = [block_diag(*[s.T for s in snap.sigma[ell]]) for ell in range(kap)]
    shT = [block_diag(*[s.T for s in snap.sigma_hat[ell]]) for ell in range(kap)]

    lin = []
    lin_hat = []
    Py, Pyh, Pa, Pah, F, Fh = [], [], np.zeros((n * d, d_a)), np.zeros((n * d, d_a)), [], []
    Pz = [[] for _ in range(kap)]
    Pzh = [[] for _ in range(kap)]
    eye_d = np.eye(d)
    for i, g in enumerate(gains):
        c = snap.costs[i]
        K, Lam = Ks[i], Lams[i]
        UtS = g.U[i].T @ Sii_inv[i]
        VtS = g.V[i].T @ Shii_inv[i]
        sKg = sum((snap.sigma[ell][i].T @ K @ snap.gamma[ell] for ell in range(kap)), np.zeros(sl[i].stop - sl[i].start))
        shKg = sum(
            (snap.sigma_hat[ell][i].T @ K @ snap.gamma[ell] for ell in range(kap)), np.zeros(sl[i].stop - sl[i].start)
        )
        lin.append(c.L[i] + sKg)
        lin_hat.append(c.L[i] + shKg)
        Py.append(UtS @ snap.b[i].T - snap.b_x.T + snap.rho * eye_d)
        Pyh.append(VtS @ snap.b_hat[i].T - snap.b_x_hat.T + snap.rho * eye_d)
        for ell in range(kap):
            Pz[ell].append(UtS @ snap.sigma[ell][i].T - snap.sigma_x[ell].T)
            Pzh[ell].append(VtS @ snap.sigma_hat[ell][i].T - snap.sigma_x_hat[ell].T)
        rows = slice(i * d, (i + 1) * d)
        for k in range(n):
            if k == i:
                continue
            Pa[rows, sl[k]] = -g.U[k].T + UtS @ Jbar[sl[i], sl[k]]
            Pah[rows, sl[k]] = -g.V[k].T + VtS @ Jbar_hat[sl[i], sl[k]]
        sxKg = sum((snap.sigma_x[ell].T @ K @ snap.gamma[ell] for ell in range(kap)), np.zeros(d))
        shxKg = sum((snap.sigma_x_hat[ell].T @ K @ snap.gamma[ell] for ell in range(kap)), np.zeros(d))
        F.append(UtS @ lin[-1] - c.L_x - K @ snap.beta - sxKg)
        Fh.append(VtS @ lin_hat[-1] - c.L_x - Lam @ snap.beta - shxKg)

    return BlockSystem(
        t=t,
        S_inv=S_inv,
        S_inv_hat=S_inv_hat,
        Jbar=Jbar,
        Jbar_hat=Jbar_hat,
        calJ=calJ,
        calJ_hat=calJ_hat,
        S_x=calJ @ U_st,
        S_x_hat=calJ_hat @ V_st,
        S_y=calJ @ bT,
        S_y_hat=calJ_hat @ bhT,
        S_z=[calJ @ s for s in sT],
        S_z_hat=[calJ_hat @ s for s in shT],
        H=calJ @ np.concatenate(lin),
        H_hat=calJ_hat @ np.concatenate(lin_hat),
        P_y=block_diag(*Py),
        P_y_hat=block_diag(*Pyh),
        P_z=[block_diag(*p) for p in Pz],
        P_z_hat=[block_diag(*p) for p in Pzh],
        P_a=Pa,
        P_a_hat=Pah,
        F=np.concatenate(F),
        F_hat=np.concatenate(Fh),
        cond=cond,
        cond_hat=cond_hat,
        snap=snap,
    )


class BlockCache:
    """Memoized :class:`BlockSystem` along a Riccati solution (blocks do not depend on pi)."""

    def __init__(self, game: GameSpec, rs: RiccatiSolution):
        self.game = game
        self.rs = rs
        self._cache: dict[float, BlockSystem] = {}
        self._const: BlockSystem | None = None

    def __call__(self, t: float) -> BlockSystem:
        t = float(t)
        if self.rs.is_infinite and self.game.is_constant:
            if self._const is None:
                self._const = self._build(0.0)
            return self._const
        blk = self._cache.get(t)
        if blk is None:
            blk = self._build(t)
            if len(self._cache) < 200_000:
                self._cache[t] = blk
        return blk

    def _build(self, t: float) -> BlockSystem:
        n = self.game.n
        return _assemble(
            self.game,
            sample(self.game, t),
            [self.rs.K_at(i, t) for i in range(n)],
            [self.rs.Lam_at(i, t) for i in range(n)],
        )


def assemble_blocks(game: GameSpec, rs: RiccatiSolution, t: float) -> BlockSystem:
    """Stacked block coefficients at time ``t``."""
    n = game.n
    return _assemble(game, sample(game, t), [rs.K_at(i, t) for i in range(n)], [rs.Lam_at(i, t) for i in range(n)])


# ---------------------------------------------------------------------------
# Feedback maps and right-hand sides
# ---------------------------------------------------------------------------


def _coupling_inv(blk: BlockSystem, pi: np.ndarray, hatted: bool, t: float) -> np.ndarray:
    """``(I - sum_l S_z^l pi Sig^l)^{-1}`` (hatted variants when requested)."""
    snap = blk.snap
    S_z = blk.S_z_hat if hatted else blk.S_z
    Sig = snap.Sig_hat if hatted else snap.Sig
    d_a = blk.S_x.shape[0]
    m = np.eye(d_a)
    for sz, sg in zip(S_z, Sig):
        m = m - sz @ pi @ sg
    try:
        return checked_inv(m, "I - S_z pi Sig", "fixedpoint.pi", t)
    except SolverError as exc:
        raise SolverError(f"fixed-point system ill-posed at t={t:.6g}", layer="fixedpoint.pi", t=t) from exc


def gain_A(blk: BlockSystem, pi: np.ndarray) -> np.ndarray:
    snap = blk.snap
    rhs = blk.S_x + blk.S_y @ pi
    for sz, sx in zip(blk.S_z, snap.sigma_x):
        rhs = rhs + sz @ pi @ sx
    return _coupling_inv(blk, pi, False, blk.t) @ rhs


def gain_A_hat(blk: BlockSystem, pi: np.ndarray, pi_hat: np.ndarray) -> np.ndarray:
    snap = blk.snap
    rhs = blk.S_x_hat + blk.S_y_hat @ pi_hat
    for sz, sx in zip(blk.S_z_hat, snap.sigma_x_hat):
        rhs = rhs + sz @ pi @ sx
    return _coupling_inv(blk, pi, True, blk.t) @ rhs


def intercept(blk: BlockSystem, pi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    snap = blk.snap
    rhs = blk.S_y_hat @ eta + blk.H_hat
    for sz, g in zip(blk.S_z_hat, snap.gamma):
        rhs = rhs + sz @ pi @ g
    return _coupling_inv(blk, pi, True, blk.t) @ rhs


def pi_rhs(blk: BlockSystem, pi: np.ndarray, pi_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Time derivatives of (pi, pi_hat)."""
    snap = blk.snap
    A = gain_A(blk, pi)
    Ah = gain_A_hat(blk, pi, pi_hat)
    dpi = -pi @ snap.b_x + blk.P_y @ pi + (blk.P_a - pi @ snap.B) @ A
    dph = -pi_hat @ snap.b_x_hat + blk.P_y_hat @ pi_hat + (blk.P_a_hat - pi_hat @ snap.B_hat) @ Ah
    for ell in range(len(snap.sigma_x)):
        pz_pi = blk.P_z[ell] @ pi
        dpi = dpi + pz_pi @ snap.sigma_x[ell] + pz_pi @ snap.Sig[ell] @ A
        pzh_pi = blk.P_z_hat[ell] @ pi
        dph = dph + pzh_pi @ snap.sigma_x_hat[ell] + pzh_pi @ snap.Sig_hat[ell] @ Ah
    return dpi, dph


def eta_system(blk: BlockSystem, pi: np.ndarray, pi_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Affine eta dynamics ``d eta/dt = M eta + f``; returns (M, f)."""
    snap = blk.snap
    E = _coupling_inv(blk, pi, True, blk.t)
    W = blk.P_a_hat - pi_hat @ snap.B_hat
    const = blk.F_hat - pi_hat @ snap.beta
    base = blk.H_hat.copy()
    for ell in range(len(snap.gamma)):
        W = W + blk.P_z_hat[ell] @ pi @ snap.Sig_hat[ell]
        const = const + blk.P_z_hat[ell] @ pi @ snap.gamma[ell]
        base = base + blk.S_z_hat[ell] @ pi @ snap.gamma[ell]
    WE = W @ E
    return blk.P_y_hat + WE @ blk.S_y_hat, const + WE @ base


# ---------------------------------------------------------------------------
# Solutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FixedPointSolution:
    """(pi, pi_hat, eta) paths (constant or held past ``grid`` for infinite horizon) and diagnostics."""

    pi: GridPath
    pi_hat: GridPath
    eta: GridPath
    psi: GridPath
    residuals: dict[str, float]
    method: str = "rk4"
    diagnostics: dict = field(default_factory=dict)


def solve_pi(game: GameSpec, rs: RiccatiSolution, grid: np.ndarray | None = None, blocks: BlockCache | None = None) -> tuple[GridPath, GridPath]:
    """Joint backward RK4 for (pi, pi_hat) from zero terminal values."""
    if game.is_infinite:
        pi, ph, _ = solve_pi_infinite(game, rs, blocks)
        return GridPath.constant(pi), GridPath.constant(ph)
    grid = rs.grid if grid is None else np.asarray(grid, dtype=float)
    blocks = blocks or BlockCache(game, rs)
    nd, d = game.n * game.d, game.d

    def rhs(t: float, z: np.ndarray) -> np.ndarray:
        dpi, dph = pi_rhs(blocks(t), z[0], z[1])
        return np.stack([dpi, dph])

    path = rk4_backward(rhs, grid, np.zeros((2, nd, d)), layer="fixedpoint.pi")
    pi = GridPath(path.grid, path.values[:, 0], path.derivs[:, 0])
    ph = GridPath(path.grid, path.values[:, 1], path.derivs[:, 1])
    return pi, ph


def _newton(fun, z0: np.ndarray, layer: str, tol: float = 1e-13, max_iter: int = 50) -> np.ndarray:
    """Damped Newton with a forward-difference Jacobian."""
    z = z0.copy()
    r = fun(z)
    for _ in range(max_iter):
        nr = np.max(np.abs(r))
        if nr < tol:
            break
        jac = np.empty((r.size, z.size))
        for j in range(z.size):
            h = 1e-7 * max(1.0, abs(z[j]))
            zp = z.copy()
            zp[j] += h
            jac[:, j] = (fun(zp) - r) / h
        try:
            step = np.linalg.solve(jac, r)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"{layer}: singular Newton Jacobian (residual {nr:.3g})", layer=layer) from exc
        lam = 1.0
        while lam > 1e-6:
            z_new = z - lam * step
            try:
                r_new = fun(z_new)
            except SolverError:
                r_new = None
            if r_new is not None and np.max(np.abs(r_new)) < nr:
                break
            lam *= 0.5
        else:
            break
        z, r = z_new, r_new
    return z


def _symmetric_scalar(game: GameSpec, blk: BlockSystem) -> bool:
    if game.d != 1 or any(di != 1 for di in game.control_dims) or game.n < 1:
        return False
    snap = blk.snap
    if any(np.any(s != 0.0) for row in snap.sigma for s in row) or any(
        np.any(s != 0.0) for row in snap.sigma_hat for s in row
    ):
        return False

    def same(v: np.ndarray) -> bool:
        return bool(np.allclose(v, v.flat[0], rtol=1e-13, atol=1e-15))

    n = game.n
    off = ~np.eye(n, dtype=bool)
    checks = [
        blk.S_x.ravel(), blk.S_x_hat.ravel(), np.diag(blk.S_y), np.diag(blk.S_y_hat),
        np.diag(blk.P_y), np.diag(blk.P_y_hat), snap.B.ravel(), snap.B_hat.ravel(),
        np.diag(blk.P_z_hat[0]) if blk.P_z_hat else np.zeros(1),
        np.diag(blk.P_z[0]) if blk.P_z else np.zeros(1),
    ]
    if n > 1:
        checks += [blk.P_a[off], blk.P_a_hat[off]]
        if np.any(blk.S_y[off] != 0.0) or np.any(blk.S_y_hat[off] != 0.0):
            return False
    return all(same(c) for c in checks) and len(snap.sigma_x) == 1


@dataclass(frozen=True)
class QuadraticRoots:
    a: float
    b: float
    c: float
    roots: tuple[float, float]
    selected: float


def _quadratic(a: float, b: float, c: float, what: str) -> QuadraticRoots:
    if abs(a) < 1e-300:
        if b == 0.0:
            raise SolverError(f"{what}: degenerate quadratic", layer="fixedpoint.pi")
        r = -c / b
        return QuadraticRoots(a, b, c, (r, r), r)
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        raise SolverError(
            f"{what}: no real symmetric solution (discriminant {disc:.3g} < 0)", layer="fixedpoint.pi"
        )
    sq = np.sqrt(disc)
    # numerically stable pair
    q = -0.5 * (b + np.copysign(sq, b)) if b != 0.0 else -0.5 * sq
    r1 = q / a
    r2 = c / q if q != 0.0 else -r1
    lo, hi = sorted((float(r1), float(r2)))
    return QuadraticRoots(a, b, c, (lo, hi), hi)


def symmetric_scalar_roots(game: GameSpec, blk: BlockSystem) -> tuple[QuadraticRoots, QuadraticRoots]:
    """Closed-form stationary (pi_1, pi_hat_1) for symmetric scalar games with uncontrolled volatility.

    Per player the stationary equations reduce to ``a p^2 + b p + c = 0`` with
    ``a = -n b_1 S_y``, ``b = -b_x + P_y + P_z s_x + sum_j P_a,1j S_y - n b_1 S_x``,
    ``c = sum_{j != 1} P_a,1j S_x,j`` (and the hatted analogue whose constant
    also carries ``p P^_z s^_x``).  The larger root is selected: it is the limit
    of the finite-horizon solution and keeps the closed loop stable.
    """
    snap = blk.snap
    n = game.n
    b1, bh1 = float(snap.B[0, 0]), float(snap.B_hat[0, 0])
    sy, syh = float(blk.S_y[0, 0]), float(blk.S_y_hat[0, 0])
    sx, sxh = float(blk.S_x[0, 0]), float(blk.S_x_hat[0, 0])
    pa = float(blk.P_a[0, 1:].sum()) if n > 1 else 0.0
    pah = float(blk.P_a_hat[0, 1:].sum()) if n > 1 else 0.0
    pz = float(blk.P_z[0][0, 0]) * float(snap.sigma_x[0][0, 0])
    a = -n * b1 * sy
    b = -float(snap.b_x[0, 0]) + float(blk.P_y[0, 0]) + pz + pa * sy - n * b1 * sx
    c = pa * sx
    pi_roots = _quadratic(a, b, c, "pi")
    p = pi_roots.selected
    ah = -n * bh1 * syh
    bh = -float(snap.b_x_hat[0, 0]) + float(blk.P_y_hat[0, 0]) + pah * syh - n * bh1 * sxh
    ch = pah * sxh + p * float(blk.P_z_hat[0][0, 0]) * float(snap.sigma_x_hat[0][0, 0])
    return pi_roots, _quadratic(ah, bh, ch, "pi_hat")


def solve_pi_infinite(
    game: GameSpec, rs: RiccatiSolution, blocks: BlockCache | None = None
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Stationary (pi, pi_hat) for constant coefficients.

    Symmetric scalar games use the quadratic closed form; all games also run
    the pseudo-time flow of the finite-horizon system followed by damped
    Newton, and the two are reported side by side in the diagnostics.
    """
    if not game.is_infinite:
        raise ConfigError("solve_pi_infinite needs an infinite-horizon game")
    blocks = blocks or BlockCache(game, rs)
    blk = blocks(0.0)
    nd, d = game.n * game.d, game.d
    shape = (2, nd, d)

    def F(z: np.ndarray) -> np.ndarray:
        zz = z.reshape(shape)
        dpi, dph = pi_rhs(blk, zz[0], zz[1])
        return np.concatenate([dpi.ravel(), dph.ravel()])

    diag: dict = {}
    z = np.zeros(int(np.prod(shape)))
    step = PSEUDO_STEP
    for _attempt in range(4):
        z = np.zeros_like(z)
        ok = True
        try:
            for _ in range(MAX_PSEUDO_STEPS):
                k1 = -F(z)
                if np.max(np.abs(k1)) < STATIONARY_TOL:
                    break
                k2 = -F(z + 0.5 * step * k1)
                k3 = -F(z + 0.5 * step * k2)
                k4 = -F(z + step * k3)
                z = z + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
                if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > 1e100:
                    ok = False
                    break
        except SolverError:
            ok = False
        if ok:
            break
        step /= 4.0
    diag["pseudo_limit"] = z.reshape(shape).copy() if ok else None
    diag["pseudo_residual"] = float(np.max(np.abs(F(z)))) if ok else float("inf")
    seed = z if ok else np.zeros_like(z)
    z = _newton(F, seed, "fixedpoint.pi")
    res = float(np.max(np.abs(F(z))))
    diag["newton_residual"] = res
    jac_cond = None
    try:
        jac = np.empty((z.size, z.size))
        r0 = F(z)
        for j in range(z.size):
            h = 1e-7 * max(1.0, abs(z[j]))
            zp = z.copy()
            zp[j] += h
            jac[:, j] = (F(zp) - r0) / h
        jac_cond = float(np.linalg.cond(jac))
    except SolverError:
        pass
    diag["jacobian_cond"] = jac_cond
    if res > RESIDUAL_TOL:
        raise SolverError(f"stationary fixed point did not converge (residual {res:.3g})", layer="fixedpoint.pi")
    pi, ph = z.reshape(shape)
    diag["method"] = "newton"
    if _symmetric_scalar(game, blk):
        r_pi, r_ph = symmetric_scalar_roots(game, blk)
        diag["quadratic"] = (r_pi, r_ph)
        diag["method"] = "quadratic"
        pi = np.full((nd, d), r_pi.selected)
        ph = np.full((nd, d), r_ph.selected)
    return pi, ph, diag


def _eta_terminal(game: GameSpec) -> np.ndarray:
    return np.concatenate([pc.r for pc in game.cost.players])


def solve_eta(
    game: GameSpec,
    rs: RiccatiSolution,
    pi: GridPath,
    pi_hat: GridPath,
    grid: np.ndarray | None = None,
    blocks: BlockCache | None = None,
) -> tuple[GridPath, GridPath]:
    """Deterministic eta and its drift psi.

    Finite horizon: backward RK4 from ``eta_T = r``.  Infinite horizon: the
    bounded solution ``eta_t = -int_t^inf exp(M (t - u)) f_u du``; constant
    forcing gives ``-M^{-1} f``, time-varying forcing is integrated interval by
    interval with Simpson's rule up to the last coefficient knot.
    """
    blocks = blocks or BlockCache(game, rs)
    if not game.is_infinite:
        grid = rs.grid if grid is None else np.asarray(grid, dtype=float)

        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            M, f = eta_system(blocks(t), pi(t), pi_hat(t))
            return M @ y + f

        path = rk4_backward(rhs, grid, _eta_terminal(game), layer="fixedpoint.eta")
        return path, GridPath(path.grid, path.derivs, None)

    blk0 = blocks(0.0)
    M, f0 = eta_system(blk0, pi(0.0), pi_hat(0.0))
    eig = np.linalg.eigvals(M)
    if np.min(eig.real) <= 0.0:
        raise SolverError(
            f"eta integral diverges; closed-loop eta matrix has eigenvalue {eig[np.argmin(eig.real)]:.6g} "
            "with non-positive real part",
            layer="fixedpoint.eta",
        )
    knots = game.knots()
    if knots.size <= 1:
        y = -np.linalg.solve(M, f0)
        return GridPath.constant(y), GridPath.constant(np.zeros_like(y))
    # Time-varying linear costs: coefficients (and M) are constant, only f moves.
    t_last = float(knots[-1])
    grid = np.unique(np.concatenate([np.linspace(0.0, t_last, max(2, int(np.ceil(t_last * 200)) + 1)), knots]))

    def forcing(t: float) -> np.ndarray:
        return eta_system(blocks(t), pi(t), pi_hat(t))[1]

    ys = np.empty((grid.size, M.shape[0]))
    ys[-1] = -np.linalg.solve(M, forcing(t_last))
    for j in range(grid.size - 2, -1, -1):
        h = grid[j + 1] - grid[j]
        nodes = np.array([grid[j], grid[j] + 0.5 * h, grid[j + 1]])
        w = simpson_weights(nodes)
        acc = sum(w[q] * expm(-M * (nodes[q] - grid[j])) @ forcing(float(nodes[q])) for q in range(3))
        ys[j] = expm(-M * h) @ ys[j + 1] - acc
    ders = np.array([M @ y + forcing(float(t)) for t, y in zip(grid, ys)])
    eta = GridPath(grid, ys, ders, hold=True)
    return eta, GridPath(grid, ders, None, hold=True)


def ode_residuals(game: GameSpec, blocks: BlockCache, fp: FixedPointSolution) -> dict[str, float]:
    """Max residual of the (pi, pi_hat, eta) equations.

    Finite horizon: compares the derivative of the interpolant at grid
    midpoints against the right-hand side.  Infinite horizon: the stationary
    algebraic residual.
    """
    out = {}
    if fp.pi.grid is None:
        blk = blocks(0.0)
        dpi, dph = pi_rhs(blk, fp.pi(0.0), fp.pi_hat(0.0))
        out["pi"] = float(np.max(np.abs(dpi)))
        out["pi_hat"] = float(np.max(np.abs(dph)))
        if fp.eta.grid is None:
            M, f = eta_system(blk, fp.pi(0.0), fp.pi_hat(0.0))
            out["eta"] = float(np.max(np.abs(M @ fp.eta(0.0) + f)))
        return out
    g = fp.pi.grid
    r_pi = r_ph = r_eta = 0.0
    for j in range(g.size - 1):
        t = 0.5 * (g[j] + g[j + 1])
        blk = blocks(t)
        p, ph, y = fp.pi(t), fp.pi_hat(t), fp.eta(t)
        dpi, dph = pi_rhs(blk, p, ph)
        M, f = eta_system(blk, p, ph)
        r_pi = max(r_pi, float(np.max(np.abs(_hermite_deriv(fp.pi, t) - dpi))))
        r_ph = max(r_ph, float(np.max(np.abs(_hermite_deriv(fp.pi_hat, t) - dph))))
        r_eta = max(r_eta, float(np.max(np.abs(_hermite_deriv(fp.eta, t) - (M @ y + f)))))
    return {"pi": r_pi, "pi_hat": r_ph, "eta": r_eta}


def _hermite_deriv(path: GridPath, t: float) -> np.ndarray:
    g = path.grid
    j = min(int(np.searchsorted(g, t, side="right")) - 1, g.size - 2)
    h = g[j + 1] - g[j]
    s = (t - g[j]) / h
    dh00 = (6 * s * s - 6 * s) / h
    dh10 = 3 * s * s - 4 * s + 1
    dh01 = (-6 * s * s + 6 * s) / h
    dh11 = 3 * s * s - 2 * s
    return dh00 * path.values[j] + dh01 * path.values[j + 1] + dh10 * path.derivs[j] + dh11 * path.derivs[j + 1]


def solve_fixed_point(game: GameSpec, rs: RiccatiSolution, blocks: BlockCache | None = None) -> FixedPointSolution:
    """Solve (pi, pi_hat) then eta, and record the ODE residuals."""
    blocks = blocks or BlockCache(game, rs)
    diag: dict = {}
    if game.is_infinite:
        p, ph, diag = solve_pi_infinite(game, rs, blocks)
        pi, pi_hat = GridPath.constant(p), GridPath.constant(ph)
        method = diag["method"]
    else:
        pi, pi_hat = solve_pi(game, rs, blocks=blocks)
        method = "rk4"
    eta, psi = solve_eta(game, rs, pi, pi_hat, blocks=blocks)
    fp = FixedPointSolution(pi, pi_hat, eta, psi, {}, method, diag)
    res = ode_residuals(game, blocks, fp)
    return FixedPointSolution(pi, pi_hat, eta, psi, res, method, diag)
