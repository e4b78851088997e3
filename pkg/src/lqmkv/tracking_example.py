"""
Two-player target-tracking game with scalar state.

Player i steers dX = (b_1 a_1 + b_2 a_2) dt + sigma dW towards a constant
target T_i and pays, per unit of discounted time,

    lambda_i Var(X) + delta_i (X - T_i)^2 + theta_i Var(a_i) + xi_i a_i^2

(the constant delta_i T_i^2 is dropped).  In the stationary regime every
coefficient has a closed form: with P = b^2/(theta+xi) and P~ = b^2/xi,

    P K^2 + rho K - (lambda+delta) = 0,     P~ L^2 + rho L - delta = 0,

the fixed-point corrections pi, pi~ solve the coupled stationary equations

    pi_i (P_i K_i + rho + a) + K_i sum_{k != i} P_k (K_k + pi_k) = 0,
    a = sum_k P_k (K_k + pi_k)

(likewise with tildes), and the mean intercepts eta solve a 2 x 2 linear
system.  The fluctuation gain is a_i - abar_i = -(P_i/b_i)(K_i+pi_i)(x-xbar)
and the mean control is abar_i = -(P~_i/b_i)((L_i+pi~_i) xbar + eta_i).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .equilibrium import EquilibriumLaw, solve_nash
from .errors import ConfigError, LQMKVError, SolverError
from .model import GameSpec, make_game

PARAMETERS = ("lambda", "delta", "theta", "xi")


@dataclass(frozen=True)
class TrackingParams:
    """Per-player weights (pairs) and shared dynamics of the tracking game."""

    lam: tuple[float, float] = (1.0, 1.0)
    delta: tuple[float, float] = (1.0, 1.0)
    theta: tuple[float, float] = (1.0, 1.0)
    xi: tuple[float, float] = (1.0, 1.0)
    targets: tuple[float, float] = (0.0, 10.0)
    b: tuple[float, float] = (1.0, 1.0)
    sigma: float = 1.0
    rho: float = 3.0
    x0_mean: float = 0.0
    x0_var: float = 0.0

    def __post_init__(self) -> None:
        for name in ("lam", "delta", "theta", "xi", "targets", "b"):
            v = getattr(self, name)
            if len(v) != 2:
                raise ConfigError(f"{name} needs one value per player")
            object.__setattr__(self, name, tuple(float(x) for x in v))
        for name in ("lam", "delta", "theta"):
            if min(getattr(self, name)) < 0.0:
                raise ConfigError(f"{name} must be nonnegative")
        if min(self.xi) <= 0.0:
            raise ConfigError("xi must be positive")
        if min(t + x for t, x in zip(self.theta, self.xi)) <= 0.0:
            raise ConfigError("theta + xi must be positive")
        if not self.rho > 0.0:
            raise ConfigError("rho must be positive")
        if self.x0_var < 0.0:
            raise ConfigError("x0_var must be nonnegative")

    def with_value(self, parameter: str, value: float, players: Sequence[int] = (0,)) -> "TrackingParams":
        key = {"lambda": "lam", "delta": "delta", "theta": "theta", "xi": "xi"}.get(parameter)
        if key is None:
            raise ConfigError(f"unknown sweep parameter {parameter!r}; choose from {PARAMETERS}")
        v = list(getattr(self, key))
        for i in players:
            v[i] = float(value)
        return replace(self, **{key: tuple(v)})


def build_game(p: TrackingParams) -> GameSpec:
    """Infinite-horizon game: Q = lambda+delta, Q~ = -lambda, N_ii = theta+xi, N~_ii = -theta, L_x = -delta T."""
    players = []
    for i in range(2):
        blocks: list[dict] = [dict(N=0.0), dict(N=0.0)]
        blocks[i] = dict(N=p.theta[i] + p.xi[i], N_tilde=-p.theta[i])
        players.append(
            dict(Q=p.lam[i] + p.delta[i], Q_tilde=-p.lam[i], L_x=[-p.delta[i] * p.targets[i]], blocks=blocks)
        )
    return make_game(
        d=1,
        control_dims=[1, 1],
        horizon=math.inf,
        rho=p.rho,
        x0_mean=[p.x0_mean],
        x0_cov=[[p.x0_var]],
        dynamics=dict(gamma=[[p.sigma]], controls=[dict(b=p.b[0]), dict(b=p.b[1])]),
        players=players,
    )


@dataclass(frozen=True)
class ClosedFormSolution:
    """Stationary coefficients of both players (arrays of length 2) and derived quantities."""

    K: np.ndarray
    Lam: np.ndarray
    P: np.ndarray
    P_tilde: np.ndarray
    a: float
    a_tilde: float
    pi: np.ndarray
    pi_tilde: np.ndarray
    eta_bar: np.ndarray
    eta_fluct: np.ndarray
    A: np.ndarray
    A_hat: np.ndarray
    c: np.ndarray
    xbar_inf: float
    stationary_variance: float
    x0_mean: float

    def mean_path(self, t: np.ndarray | float) -> np.ndarray:
        """xbar_t = xbar_inf + (xbar_0 - xbar_inf) e^{-a~ t}."""
        return self.xbar_inf + (self.x0_mean - self.xbar_inf) * np.exp(-self.a_tilde * np.asarray(t, dtype=float))


def _riccati_root(P: float, rho: float, q: float) -> float:
    """Nonnegative root of P k^2 + rho k - q = 0."""
    if P == 0.0:
        return q / rho
    return (-rho + math.sqrt(rho * rho + 4.0 * P * q)) / (2.0 * P)


def _corrections(P: np.ndarray, K: np.ndarray, rho: float) -> tuple[np.ndarray, float]:
    """Solve pi_i (P_i K_i + rho + a) + K_i P_j (K_j + pi_j) = 0 with a = sum P_k (K_k + pi_k).

    For fixed a the two equations are linear in pi; the outer scalar equation
    for a is solved by bracketing on a > 0 (a = sum P K when pi = 0).
    """

    def pi_of(a: float) -> np.ndarray:
        c = P * K + rho + a
        M = np.array([[c[0], K[0] * P[1]], [K[1] * P[0], c[1]]])
        rhs = -np.array([K[0] * P[1] * K[1], K[1] * P[0] * K[0]])
        return np.linalg.solve(M, rhs)

    def gap(a: float) -> float:
        return float(np.sum(P * (K + pi_of(a)))) - a

    a0 = float(np.sum(P * K))
    if a0 == 0.0:
        return np.zeros(2), 0.0
    if P[0] == P[1] and K[0] == K[1]:
        # Symmetric players: 2 P pi^2 + (4 P K + rho) pi + P K^2 = 0; keep the root closest to zero.
        p, k = P[0], K[0]
        qa, qb, qc = 2.0 * p, p * k + rho + 2.0 * p * k + p * k, p * k * k
        disc = qb * qb - 4.0 * qa * qc
        if disc < 0.0:
            raise SolverError("no closed-form equilibrium for these parameters", layer="closed_form")
        pi = (-qb + math.sqrt(disc)) / (2.0 * qa)
        return np.array([pi, pi]), float(2.0 * p * (k + pi))
    # gap(a0) <= 0 because the corrections are nonpositive; gap(0+) >= 0.
    lo, hi = 1e-300, a0
    if gap(hi) > 0.0 or gap(lo) < 0.0:
        raise SolverError("no closed-form equilibrium for these parameters", layer="closed_form")
    a = brentq(gap, lo, hi, xtol=1e-15, rtol=1e-15)
    return pi_of(a), a


def closed_form(p: TrackingParams) -> ClosedFormSolution:
    """Stationary equilibrium coefficients from the scalar formulas."""
    b = np.array(p.b)
    theta, xi = np.array(p.theta), np.array(p.xi)
    lam, delta = np.array(p.lam), np.array(p.delta)
    P = b**2 / (theta + xi)
    Pt = b**2 / xi
    K = np.array([_riccati_root(P[i], p.rho, lam[i] + delta[i]) for i in range(2)])
    Lam = np.array([_riccati_root(Pt[i], p.rho, delta[i]) for i in range(2)])
    pi, a = _corrections(P, K, p.rho)
    pit, at = _corrections(Pt, Lam, p.rho)
    # (Pt_i Lam_i + rho) eta_i + Lam_i Pt_j eta_j + pit_i sum_k Pt_k eta_k + delta_i T_i = 0
    M = np.empty((2, 2))
    for i in range(2):
        for k in range(2):
            M[i, k] = pit[i] * Pt[k] + (Pt[i] * Lam[i] + p.rho if k == i else Lam[i] * Pt[k])
    eta = np.linalg.solve(M, -delta * np.array(p.targets))
    A = -(P / b) * (K + pi)
    A_hat = -(Pt / b) * (Lam + pit)
    c = -(Pt / b) * eta
    if at <= 0.0:
        raise SolverError("mean dynamics not mean-reverting; no stationary mean", layer="closed_form")
    xbar_inf = float(-np.sum(Pt * eta) / at)
    var = p.sigma**2 / (2.0 * a) if a > 0.0 else math.inf
    return ClosedFormSolution(K, Lam, P, Pt, a, at, pi, pit, eta, np.zeros(2), A, A_hat, c, xbar_inf, var, p.x0_mean)


@dataclass(frozen=True)
class CrossCheckReport:
    """Absolute differences between the generic pipeline and the closed form, per symbol."""

    deltas: dict[str, float]
    tol: float

    @property
    def max_delta(self) -> float:
        return max(self.deltas.values())

    @property
    def passed(self) -> bool:
        return self.max_delta <= self.tol


def cross_check(p: TrackingParams, tol: float = 1e-7, law: EquilibriumLaw | None = None) -> CrossCheckReport:
    """Compare K, Lambda, pi, pi~, eta and the feedback gains of both routes."""
    cf = closed_form(p)
    law = law or solve_nash(build_game(p))
    A, Ah, c = law.gains(0.0)
    pi = law.fp.pi(0.0)[:, 0]
    ph = law.fp.pi_hat(0.0)[:, 0]
    eta = law.fp.eta(0.0)
    deltas = {}
    for i in range(2):
        deltas[f"K{i + 1}"] = abs(float(law.rs.K_at(i, 0.0)[0, 0]) - cf.K[i])
        deltas[f"Lambda{i + 1}"] = abs(float(law.rs.Lam_at(i, 0.0)[0, 0]) - cf.Lam[i])
        deltas[f"pi{i + 1}"] = abs(pi[i] - cf.pi[i])
        deltas[f"pi_tilde{i + 1}"] = abs(ph[i] - cf.pi_tilde[i])
        deltas[f"eta{i + 1}"] = abs(eta[i] - cf.eta_bar[i])
        deltas[f"A{i + 1}"] = abs(A[i, 0] - cf.A[i])
        deltas[f"A_hat{i + 1}"] = abs(Ah[i, 0] - cf.A_hat[i])
        deltas[f"c{i + 1}"] = abs(c[i] - cf.c[i])
    return CrossCheckReport({k: float(v) for k, v in deltas.items()}, tol)


SWEEP_COLUMNS = (
    "value",
    "K1",
    "Lambda1",
    "a",
    "a_tilde",
    "stationary_variance",
    "xbar_inf",
    "gain_norm1",
    "mean_gain_norm1",
    "intercept1",
    "error",
)


def sweep(
    p: TrackingParams, parameter: str, values: Sequence[float], players: Sequence[int] = (0,)
) -> list[dict]:
    """Closed-form rows over ``values`` of one weight (set for ``players``); failures are recorded in-row."""
    rows = []
    for v in values:
        row: dict = {k: math.nan for k in SWEEP_COLUMNS}
        row["value"] = float(v)
        row["error"] = ""
        try:
            cf = closed_form(p.with_value(parameter, v, players))
        except (LQMKVError, ValueError, ArithmeticError) as exc:
            row["error"] = str(exc)
        else:
            row.update(
                K1=cf.K[0],
                Lambda1=cf.Lam[0],
                a=cf.a,
                a_tilde=cf.a_tilde,
                stationary_variance=cf.stationary_variance,
                xbar_inf=cf.xbar_inf,
                gain_norm1=abs(cf.A[0]),
                mean_gain_norm1=abs(cf.A_hat[0]),
                intercept1=abs(cf.c[0]),
            )
        rows.append(row)
    return rows


DEFAULT_PARAMS = TrackingParams()
