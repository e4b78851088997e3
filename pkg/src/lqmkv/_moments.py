"""
First and second moments of a deviating player's state, and expected
quadratic forms over them.

A deviation scenario for player i runs two coupled copies of the state driven
by the same noise: the reference state X^r under the reference profile and
player i's own state X, in which player i uses its own affine law while every
opponent k plays the process A_k (X^r - E X^r) + A^_k E X^r + c_k.  The joint
fluctuation z = (X - E X, X^r - E X^r) is linear with drift F z and diffusion
G^l z + g^l, so its covariance C solves

    dC/dt = F C + C F' + sum_l (G^l C G^l' + g^l g^l').

Every scalar or vector quantity below is an affine form ``(L, m)`` in z, and
E[u' W v] = tr(L_u' W L_v C) + m_u' W m_v.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._numerics import checked_inv
from .model import CoefficientSnapshot, GameSpec, sample

Gains = tuple[np.ndarray, np.ndarray, np.ndarray]


def expect(Lu: np.ndarray, mu: np.ndarray, W: np.ndarray, Lv: np.ndarray, mv: np.ndarray, C: np.ndarray) -> float:
    """E[u' W v] for affine forms u = Lu z + mu, v = Lv z + mv with Cov z = C (symmetric)."""
    return float(np.sum((Lu.T @ W @ Lv) * C) + mu @ W @ mv)


@dataclass(frozen=True)
class Scenario:
    """Affine forms of one deviation scenario at one time."""

    La: np.ndarray  # controls seen by the own state, d_A x 2d
    ma: np.ndarray
    F_own: np.ndarray  # own fluctuation drift, d x 2d
    dm: np.ndarray  # own mean drift
    F_ref: np.ndarray
    dmr: np.ndarray
    G_own: list[np.ndarray]
    g_own: list[np.ndarray]
    G_ref: list[np.ndarray]
    g_ref: list[np.ndarray]


def scenario(
    snap: CoefficientSnapshot,
    i: int | None,
    sl: list[slice],
    ref: Gains,
    own_L: np.ndarray | None,
    own_m: np.ndarray | None,
    m: np.ndarray,
    mr: np.ndarray,
) -> Scenario:
    """Forms for player ``i`` playing ``own_L z + own_m`` against the reference profile ``ref``."""
    A, Ah, c = ref
    d = snap.b_x.shape[0]
    zero = np.zeros((d, d))
    Lr_a = np.hstack([np.zeros((A.shape[0], d)), A])
    mr_a = Ah @ mr + c
    La, ma = Lr_a.copy(), mr_a.copy()
    if i is not None:
        La[sl[i]] = own_L
        ma[sl[i]] = own_m
    F_own = np.hstack([snap.b_x, zero]) + snap.B @ La
    dm = snap.beta + snap.b_x_hat @ m + snap.B_hat @ ma
    F_ref = np.hstack([zero, snap.b_x + snap.B @ A])
    dmr = snap.beta + snap.b_x_hat @ mr + snap.B_hat @ mr_a
    G_own, g_own, G_ref, g_ref = [], [], [], []
    for ell in range(len(snap.sigma_x)):
        G_own.append(np.hstack([snap.sigma_x[ell], zero]) + snap.Sig[ell] @ La)
        g_own.append(snap.gamma[ell] + snap.sigma_x_hat[ell] @ m + snap.Sig_hat[ell] @ ma)
        G_ref.append(np.hstack([zero, snap.sigma_x[ell] + snap.Sig[ell] @ A]))
        g_ref.append(snap.gamma[ell] + snap.sigma_x_hat[ell] @ mr + snap.Sig_hat[ell] @ mr_a)
    return Scenario(La, ma, F_own, dm, F_ref, dmr, G_own, g_own, G_ref, g_ref)


def own_form(own: tuple, d: int, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Affine form in z of ``(A, A_hat, c)`` or ``(A, A_hat, c, A_ref)``."""
    A, Ah, c = own[:3]
    A_ref = own[3] if len(own) > 3 and own[3] is not None else np.zeros((A.shape[0], d))
    return np.hstack([A, A_ref]), Ah @ m + c


@dataclass(frozen=True)
class MomentPath:
    """Means of own/reference state and joint fluctuation covariance on ``grid``."""

    grid: np.ndarray
    m: np.ndarray
    mr: np.ndarray
    C: np.ndarray

    def own_cov(self) -> np.ndarray:
        d = self.m.shape[1]
        return self.C[:, :d, :d]


def moment_path(
    game: GameSpec,
    ref: Callable[[float], Gains],
    grid: np.ndarray,
    i: int | None = None,
    own: Callable[[float], tuple] | None = None,
) -> MomentPath:
    """Forward RK4 of (E X, E X^r, C); ``own=None`` means player i follows the reference."""
    d = game.d
    sl = game.control_slices()
    C0 = np.tile(game.x0_cov, (2, 2))
    y = np.concatenate([game.x0_mean, game.x0_mean, C0.ravel()])

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        snap = sample(game, t)
        m, mr = y[:d], y[d : 2 * d]
        C = y[2 * d :].reshape(2 * d, 2 * d)
        if own is None or i is None:
            sc = scenario(snap, None, sl, ref(t), None, None, m, mr)
        else:
            oL, om = own_form(own(t), d, m)
            sc = scenario(snap, i, sl, ref(t), oL, om, m, mr)
        F = np.vstack([sc.F_own, sc.F_ref])
        dC = F @ C + C @ F.T
        for Go, go, Gr, gr in zip(sc.G_own, sc.g_own, sc.G_ref, sc.g_ref):
            G = np.vstack([Go, Gr])
            g = np.concatenate([go, gr])
            dC = dC + G @ C @ G.T + np.outer(g, g)
        return np.concatenate([sc.dm, sc.dmr, (0.5 * (dC + dC.T)).ravel()])

    out = np.empty((grid.size, y.size))
    out[0] = y
    for j in range(grid.size - 1):
        t, h = float(grid[j]), float(grid[j + 1] - grid[j])
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[j + 1] = y
    return MomentPath(
        np.asarray(grid, dtype=float), out[:, :d], out[:, d : 2 * d], out[:, 2 * d :].reshape(-1, 2 * d, 2 * d)
    )


@dataclass(frozen=True)
class FieldValues:
    """Value-field coefficients of one player at one time and their time derivatives."""

    K: np.ndarray
    Lam: np.ndarray
    p: np.ndarray
    ph: np.ndarray
    y: np.ndarray
    dK: np.ndarray
    dLam: np.ndarray
    dp: np.ndarray
    dph: np.ndarray
    dy: np.ndarray


def expected_running_cost(snap: CoefficientSnapshot, i: int, sl: list[slice], sc: Scenario, C: np.ndarray, m: np.ndarray) -> float:
    """E f^i over the own state and the controls seen by it."""
    cs = snap.costs[i]
    d = m.size
    Lx = np.hstack([np.eye(d), np.zeros((d, d))])
    z = np.zeros(d)
    val = expect(Lx, z, cs.Q, Lx, z, C) + m @ cs.Q_hat @ m + 2.0 * cs.L_x @ m
    for k, s in enumerate(sl):
        Lk, mk = sc.La[s], sc.ma[s]
        zk = np.zeros(mk.size)
        val += 2.0 * expect(Lk, zk, cs.I[k], Lx, z, C) + 2.0 * mk @ cs.I_hat[k] @ m
        val += expect(Lk, zk, cs.N[k], Lk, zk, C) + mk @ cs.N_hat[k] @ mk + 2.0 * cs.L[k] @ mk
    for (k, l), Gh in cs.G_hat.items():
        Lk, mk, Ll, ml = sc.La[sl[k]], sc.ma[sl[k]], sc.La[sl[l]], sc.ma[sl[l]]
        val += expect(Lk, np.zeros(mk.size), cs.G[(k, l)], Ll, np.zeros(ml.size), C) + mk @ Gh @ ml
    return float(val)


def expected_drift_without_R(
    snap: CoefficientSnapshot, i: int, sl: list[slice], sc: Scenario, fv: FieldValues, C: np.ndarray, m: np.ndarray, mr: np.ndarray
) -> float:
    """E of the dt-coefficient of d(e^{rho t} ...) for the field minus its R terms, plus E f."""
    d = m.size
    z = np.zeros(d)
    eye = np.eye(d)
    Lx = np.hstack([eye, np.zeros((d, d))])
    LY = np.hstack([np.zeros((d, d)), fv.p])
    mY = fv.ph @ mr + fv.y
    LmuY = np.hstack([np.zeros((d, d)), fv.dp]) + fv.p @ sc.F_ref
    mmuY = fv.dph @ mr + fv.ph @ sc.dmr + fv.dy
    val = expect(Lx, z, fv.dK, Lx, z, C) + 2.0 * expect(Lx, z, fv.K, sc.F_own, z, C)
    val += m @ fv.dLam @ m + 2.0 * m @ fv.Lam @ sc.dm
    val += 2.0 * expect(LmuY, mmuY, eye, Lx, m, C) + 2.0 * expect(LY, mY, eye, sc.F_own, sc.dm, C)
    for Go, go, Gr, gr in zip(sc.G_own, sc.g_own, sc.G_ref, sc.g_ref):
        val += expect(Go, go, fv.K, Go, go, C)
        val += 2.0 * expect(fv.p @ Gr, fv.p @ gr, eye, Go, go, C)
    val -= snap.rho * (expect(Lx, z, fv.K, Lx, z, C) + m @ fv.Lam @ m + 2.0 * expect(LY, mY, eye, Lx, m, C))
    return float(val + expected_running_cost(snap, i, sl, sc, C, m))


@dataclass(frozen=True)
class BestResponseCoefficients:
    """alpha_i = -S^{-1}(U x~ + Xi x~^r) - S^^{-1}(V xbar + O xbar^r + o)."""

    S: np.ndarray
    S_hat: np.ndarray
    U: np.ndarray
    V: np.ndarray
    Xi: np.ndarray
    O: np.ndarray
    o: np.ndarray

    def own_gain(self) -> np.ndarray:
        return -np.linalg.solve(self.S, self.U)

    def ref_gain(self) -> np.ndarray:
        return -np.linalg.solve(self.S, self.Xi)

    def coinciding(self) -> Gains:
        """Gains when the own state equals the reference state."""
        return (
            -np.linalg.solve(self.S, self.U + self.Xi),
            -np.linalg.solve(self.S_hat, self.V + self.O),
            -np.linalg.solve(self.S_hat, self.o),
        )


def br_coefficients(snap: CoefficientSnapshot, i: int, sl: list[slice], K: np.ndarray, Lam: np.ndarray, p: np.ndarray, ph: np.ndarray, y: np.ndarray, ref: Gains) -> BestResponseCoefficients:
    from .riccati import player_gains

    A, Ah, c = ref
    g = player_gains(snap, i, K, Lam)
    di = sl[i].stop - sl[i].start
    Xi = snap.b[i].T @ p
    O = snap.b_hat[i].T @ ph
    o = snap.costs[i].L[i] + snap.b_hat[i].T @ y
    for ell in range(len(snap.sigma_x)):
        si, sih = snap.sigma[ell][i], snap.sigma_hat[ell][i]
        Xi = Xi + si.T @ p @ (snap.sigma_x[ell] + snap.Sig[ell] @ A)
        O = O + sih.T @ p @ (snap.sigma_x_hat[ell] + snap.Sig_hat[ell] @ Ah)
        o = o + sih.T @ (p @ (snap.gamma[ell] + snap.Sig_hat[ell] @ c) + K @ snap.gamma[ell])
    for k, s in enumerate(sl):
        if k == i:
            continue
        jb = 0.5 * (g.J[(i, k)] + g.J[(k, i)].T)
        jbh = 0.5 * (g.J_hat[(i, k)] + g.J_hat[(k, i)].T)
        Xi = Xi + jb @ A[s]
        O = O + jbh @ Ah[s]
        o = o + jbh @ c[s]
    checked_inv(g.S[i], f"S^{i}_{i}", "best_response", snap.t)
    checked_inv(g.S_hat[i], f"S^^{i}_{i}", "best_response", snap.t)
    assert Xi.shape == (di, p.shape[1])
    return BestResponseCoefficients(g.S[i], g.S_hat[i], g.U[i], g.V[i], Xi, O, o)
