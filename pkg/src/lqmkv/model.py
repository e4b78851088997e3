"""
Game data for n-player linear-quadratic mean-field games.

The controlled state follows

    dX = (beta + b_x X + b~_x E[X] + sum_k b_k a_k + b~_k E[a_k]) dt
         + sum_l (gamma^l + sigma_x^l X + sigma~_x^l E[X]
                  + sum_k sigma_k^l a_k + sigma~_k^l E[a_k]) dW^l

and player i pays

    E[ int_0^T e^{-rho t} f^i dt + e^{-rho T} g^i(X_T, E[X_T]) ]

with, writing x~ = x - xbar, a~_k = a_k - abar_k and C^ = C + C~,

    f^i = x~' Q x~ + xbar' Q^ xbar
          + sum_k 2 a_k' I_k x~ + 2 abar_k' I^_k xbar
          + sum_k a~_k' N_k a~_k + abar_k' N^_k abar_k
          + sum_{k != l} a~_k' G_kl a~_l + abar_k' G^_kl abar_l
          + 2 L_x' x + 2 sum_k L_k' a_k
    g^i = x~' P x~ + xbar' P^ xbar + 2 r' x.

Every time-dependent coefficient is a :class:`CoefficientPath` sampled on its
own grid and linearly interpolated. :func:`sample` freezes all coefficients at
one time into a :class:`CoefficientSnapshot`, which is what the solvers use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, RangeError

SYM_TOL = 1e-12
PSD_TOL = 1e-10
_T_TOL = 1e-12


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CoefficientPath:
    """Matrix- or vector-valued function of time, piecewise linear on ``grid``.

    A path with a single grid point is constant for every ``t``.
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        grid = np.atleast_1d(np.asarray(self.grid, dtype=float))
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1:
            raise DimensionError("path grid must be one-dimensional")
        if values.shape[0] != grid.shape[0]:
            raise DimensionError(
                f"path has {grid.shape[0]} grid points but {values.shape[0]} samples"
            )
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise ConfigError("path grid must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ConfigError("path values must be finite")
        object.__setattr__(self, "grid", _freeze(grid))
        object.__setattr__(self, "values", _freeze(values))

    @classmethod
    def constant(cls, value: np.ndarray | float) -> "CoefficientPath":
        v = np.asarray(value, dtype=float)
        return cls(np.array([0.0]), v[None, ...])

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.values.shape[1:])

    @property
    def is_constant(self) -> bool:
        return self.grid.size == 1 or bool(np.all(self.values == self.values[0]))

    def covers(self, t0: float, t1: float) -> bool:
        if self.grid.size == 1:
            return True
        return self.grid[0] <= t0 + _T_TOL and self.grid[-1] >= t1 - _T_TOL

    def __call__(self, t: float, clamp: bool = False) -> np.ndarray:
        """Value at ``t``; outside the grid span raises unless ``clamp``."""
        if self.grid.size == 1:
            return self.values[0]
        g = self.grid
        if t < g[0] - _T_TOL or t > g[-1] + _T_TOL:
            if not clamp:
                raise RangeError(f"t={t} outside path span [{g[0]}, {g[-1]}]")
        t = min(max(t, g[0]), g[-1])
        j = int(np.searchsorted(g, t, side="right")) - 1
        if j >= g.size - 1:
            return self.values[-1]
        if t == g[j]:
            return self.values[j]
        w = (t - g[j]) / (g[j + 1] - g[j])
        return (1.0 - w) * self.values[j] + w * self.values[j + 1]


def _as_path(value, shape: tuple[int, ...], name: str) -> CoefficientPath:
    """Coerce None (zero), an array or a ``{grid, values}`` mapping into a path."""
    if value is None:
        return CoefficientPath.constant(np.zeros(shape))
    if isinstance(value, CoefficientPath):
        path = value
    elif isinstance(value, Mapping):
        if "grid" not in value or "values" not in value:
            raise ConfigError(f"{name}: time-dependent entries need 'grid' and 'values'")
        grid = np.asarray(value["grid"], dtype=float)
        vals = np.asarray(value["values"], dtype=float)
        vals = vals.reshape((grid.size,) + shape) if vals.size == grid.size * math.prod(shape) else vals
        path = CoefficientPath(grid, vals)
    else:
        arr = np.asarray(value, dtype=float)
        if arr.size == math.prod(shape) and arr.shape != shape:
            arr = arr.reshape(shape)
        path = CoefficientPath.constant(arr)
    if path.shape != shape:
        raise DimensionError(f"{name}: expected shape {shape}, got {path.shape}")
    return path


def hat(c: CoefficientPath, c_tilde: CoefficientPath) -> CoefficientPath:
    """Pointwise sum ``C + C~`` on the union of both grids."""
    if c.shape != c_tilde.shape:
        raise DimensionError(f"hat: shapes {c.shape} and {c_tilde.shape} differ")
    if c.grid.size == 1 and c_tilde.grid.size == 1:
        return CoefficientPath.constant(c.values[0] + c_tilde.values[0])
    if c.grid.size == c_tilde.grid.size and np.array_equal(c.grid, c_tilde.grid):
        return CoefficientPath(c.grid, c.values + c_tilde.values)
    grids = [p.grid for p in (c, c_tilde) if p.grid.size > 1]
    grid = np.unique(np.concatenate(grids))
    return CoefficientPath(grid, np.stack([c(t) + c_tilde(t) for t in grid]))


@dataclass(frozen=True)
class DynamicsSpec:
    """State dynamics coefficients.

    Per-noise lists are indexed by ``l`` (length ``kappa``); per-player control
    loadings are indexed by player.  ``sigma[l][i]`` is the loading of player
    ``i``'s control on noise ``l``.
    """

    d: int
    control_dims: tuple[int, ...]
    kappa: int
    beta: CoefficientPath
    b_x: CoefficientPath
    b_x_tilde: CoefficientPath
    b: tuple[CoefficientPath, ...]
    b_tilde: tuple[CoefficientPath, ...]
    gamma: tuple[CoefficientPath, ...]
    sigma_x: tuple[CoefficientPath, ...]
    sigma_x_tilde: tuple[CoefficientPath, ...]
    sigma: tuple[tuple[CoefficientPath, ...], ...]
    sigma_tilde: tuple[tuple[CoefficientPath, ...], ...]

    @property
    def n(self) -> int:
        return len(self.control_dims)

    def __post_init__(self) -> None:
        d, dims, kap = self.d, self.control_dims, self.kappa
        if d < 1 or kap < 1 or len(dims) < 1 or min(dims) < 1:
            raise DimensionError("need d >= 1, kappa >= 1, n >= 1 and every d_i >= 1")
        checks: list[tuple[CoefficientPath, tuple[int, ...], str]] = [
            (self.beta, (d,), "beta"),
            (self.b_x, (d, d), "b_x"),
            (self.b_x_tilde, (d, d), "b_x_tilde"),
        ]
        if len(self.b) != len(dims) or len(self.b_tilde) != len(dims):
            raise DimensionError("one control loading b_i per player is required")
        for i, di in enumerate(dims):
            checks += [(self.b[i], (d, di), f"b[{i}]"), (self.b_tilde[i], (d, di), f"b_tilde[{i}]")]
        for name in ("gamma", "sigma_x", "sigma_x_tilde", "sigma", "sigma_tilde"):
            if len(getattr(self, name)) != kap:
                raise DimensionError(f"{name} needs one entry per noise ({kap})")
        for ell in range(kap):
            checks += [
                (self.gamma[ell], (d,), f"gamma[{ell}]"),
                (self.sigma_x[ell], (d, d), f"sigma_x[{ell}]"),
                (self.sigma_x_tilde[ell], (d, d), f"sigma_x_tilde[{ell}]"),
            ]
            for i, di in enumerate(dims):
                checks += [
                    (self.sigma[ell][i], (d, di), f"sigma[{ell}][{i}]"),
                    (self.sigma_tilde[ell][i], (d, di), f"sigma_tilde[{ell}][{i}]"),
                ]
        for path, shape, name in checks:
            if path.shape != shape:
                raise DimensionError(f"{name}: expected shape {shape}, got {path.shape}")

    def paths(self) -> list[CoefficientPath]:
        out = [self.beta, self.b_x, self.b_x_tilde, *self.b, *self.b_tilde]
        out += [*self.gamma, *self.sigma_x, *self.sigma_x_tilde]
        for ell in range(self.kappa):
            out += [*self.sigma[ell], *self.sigma_tilde[ell]]
        return out


@dataclass(frozen=True)
class PlayerCost:
    """Cost coefficients of one player; ``I[k]``, ``N[k]``, ``L[k]`` act on player k's control.

    ``G`` maps ordered pairs ``(k, l)`` with ``k != l`` to ``d_k x d_l`` paths.
    """

    Q: CoefficientPath
    Q_tilde: CoefficientPath
    I: tuple[CoefficientPath, ...]
    I_tilde: tuple[CoefficientPath, ...]
    N: tuple[CoefficientPath, ...]
    N_tilde: tuple[CoefficientPath, ...]
    G: Mapping[tuple[int, int], CoefficientPath]
    G_tilde: Mapping[tuple[int, int], CoefficientPath]
    L_x: CoefficientPath
    L: tuple[CoefficientPath, ...]
    P: np.ndarray
    P_tilde: np.ndarray
    r: np.ndarray

    def __post_init__(self) -> None:
        for name in ("P", "P_tilde", "r"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))

    def paths(self) -> list[CoefficientPath]:
        out = [self.Q, self.Q_tilde, self.L_x, *self.I, *self.I_tilde, *self.N, *self.N_tilde, *self.L]
        return out + list(self.G.values()) + list(self.G_tilde.values())

    def symmetric_paths(self) -> list[tuple[str, CoefficientPath]]:
        out = [("Q", self.Q), ("Q_tilde", self.Q_tilde)]
        for k, (n_k, nt_k) in enumerate(zip(self.N, self.N_tilde)):
            out += [(f"N[{k}]", n_k), (f"N_tilde[{k}]", nt_k)]
        return out


@dataclass(frozen=True)
class CostSpec:
    players: tuple[PlayerCost, ...]
    rho: float

    def __post_init__(self) -> None:
        if not (self.rho >= 0.0 and math.isfinite(self.rho)):
            raise ConfigError(f"discount rate must be finite and >= 0, got {self.rho}")


@dataclass(frozen=True)
class GameSpec:
    """Complete game: dynamics, costs, horizon (``math.inf`` for infinite) and X_0 moments."""

    dynamics: DynamicsSpec
    cost: CostSpec
    horizon: float
    x0_mean: np.ndarray
    x0_cov: np.ndarray
    _constant: bool = field(default=False, init=False, repr=False, compare=False)
    _snapshot0: "CoefficientSnapshot | None" = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        dyn, d = self.dynamics, self.dynamics.d
        object.__setattr__(self, "x0_mean", _freeze(np.reshape(self.x0_mean, (d,))))
        object.__setattr__(self, "x0_cov", _freeze(np.reshape(self.x0_cov, (d, d))))
        if not self.horizon > 0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if len(self.cost.players) != dyn.n:
            raise DimensionError(f"{dyn.n} players in dynamics but {len(self.cost.players)} cost blocks")
        if np.max(np.abs(self.x0_cov - self.x0_cov.T)) > SYM_TOL:
            raise ConfigError("initial covariance must be symmetric")
        if np.linalg.eigvalsh(self.x0_cov).min() < -PSD_TOL:
            raise ConfigError("initial covariance must be positive semidefinite")
        dims = dyn.control_dims
        for i, pc in enumerate(self.cost.players):
            _check_player_shapes(pc, d, dims, i)
            for name, path in pc.symmetric_paths():
                if np.max(np.abs(path.values - np.swapaxes(path.values, -1, -2)), initial=0.0) > SYM_TOL:
                    raise ConfigError(f"player {i}: {name} must be symmetric")
            for name in ("P", "P_tilde"):
                m = getattr(pc, name)
                if np.max(np.abs(m - m.T)) > SYM_TOL:
                    raise ConfigError(f"player {i}: {name} must be symmetric")
        if not self.is_infinite:
            for path in self.all_paths():
                if not path.covers(0.0, self.horizon):
                    raise RangeError(f"a coefficient path does not cover [0, {self.horizon}]")
        object.__setattr__(self, "_constant", all(p.is_constant for p in self.all_paths()))

    @property
    def n(self) -> int:
        return self.dynamics.n

    @property
    def d(self) -> int:
        return self.dynamics.d

    @property
    def control_dims(self) -> tuple[int, ...]:
        return self.dynamics.control_dims

    @property
    def d_a(self) -> int:
        return int(sum(self.dynamics.control_dims))

    @property
    def kappa(self) -> int:
        return self.dynamics.kappa

    @property
    def rho(self) -> float:
        return self.cost.rho

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.horizon)

    @property
    def is_constant(self) -> bool:
        return self._constant

    def control_slices(self) -> list[slice]:
        offs = np.concatenate([[0], np.cumsum(self.control_dims)]).astype(int)
        return [slice(int(offs[i]), int(offs[i + 1])) for i in range(self.n)]

    def all_paths(self) -> list[CoefficientPath]:
        out = self.dynamics.paths()
        for pc in self.cost.players:
            out += pc.paths()
        return out

    def knots(self) -> np.ndarray:
        """Union of every path grid inside the horizon (at least ``{0}``)."""
        pts = [np.array([0.0])]
        for p in self.all_paths():
            if p.grid.size > 1:
                pts.append(p.grid)
        g = np.unique(np.concatenate(pts))
        if not self.is_infinite:
            g = g[(g >= 0.0) & (g <= self.horizon)]
        return g


def _check_player_shapes(pc: PlayerCost, d: int, dims: Sequence[int], i: int) -> None:
    n = len(dims)
    for name, obj in (("I", pc.I), ("I_tilde", pc.I_tilde), ("N", pc.N), ("N_tilde", pc.N_tilde), ("L", pc.L)):
        if len(obj) != n:
            raise DimensionError(f"player {i}: {name} needs one block per player")
    checks = [(pc.Q, (d, d), "Q"), (pc.Q_tilde, (d, d), "Q_tilde"), (pc.L_x, (d,), "L_x")]
    for k, dk in enumerate(dims):
        checks += [
            (pc.I[k], (dk, d), f"I[{k}]"),
            (pc.I_tilde[k], (dk, d), f"I_tilde[{k}]"),
            (pc.N[k], (dk, dk), f"N[{k}]"),
            (pc.N_tilde[k], (dk, dk), f"N_tilde[{k}]"),
            (pc.L[k], (dk,), f"L[{k}]"),
        ]
    for mapping, name in ((pc.G, "G"), (pc.G_tilde, "G_tilde")):
        for (k, l), path in mapping.items():
            if k == l or not (0 <= k < n and 0 <= l < n):
                raise DimensionError(f"player {i}: {name}[{k},{l}] needs distinct valid players")
            checks.append((path, (dims[k], dims[l]), f"{name}[{k},{l}]"))
    for path, shape, name in checks:
        if path.shape != shape:
            raise DimensionError(f"player {i}: {name} expected shape {shape}, got {path.shape}")
    for name, shape in (("P", (d, d)), ("P_tilde", (d, d)), ("r", (d,))):
        if getattr(pc, name).shape != shape:
            raise DimensionError(f"player {i}: {name} expected shape {shape}")


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlayerCostSnapshot:
    Q: np.ndarray
    Q_hat: np.ndarray
    I: list[np.ndarray]
    I_hat: list[np.ndarray]
    N: list[np.ndarray]
    N_hat: list[np.ndarray]
    G: dict[tuple[int, int], np.ndarray]
    G_hat: dict[tuple[int, int], np.ndarray]
    L_x: np.ndarray
    L: list[np.ndarray]
    P: np.ndarray
    P_hat: np.ndarray
    r: np.ndarray


@dataclass(frozen=True)
class CoefficientSnapshot:
    """All coefficients at one time, with hatted sums and stacked control loadings.

    ``B`` is ``[b_1 ... b_n]`` (d x d_A); ``Sig[l]`` stacks ``sigma[l][i]`` the same way.
    """

    t: float
    rho: float
    beta: np.ndarray
    b_x: np.ndarray
    b_x_hat: np.ndarray
    b: list[np.ndarray]
    b_hat: list[np.ndarray]
    B: np.ndarray
    B_hat: np.ndarray
    gamma: list[np.ndarray]
    sigma_x: list[np.ndarray]
    sigma_x_hat: list[np.ndarray]
    sigma: list[list[np.ndarray]]
    sigma_hat: list[list[np.ndarray]]
    Sig: list[np.ndarray]
    Sig_hat: list[np.ndarray]
    costs: list[PlayerCostSnapshot]


def _snapshot(game: GameSpec, t: float, clamp: bool) -> CoefficientSnapshot:
    dyn = game.dynamics

    def at(p: CoefficientPath) -> np.ndarray:
        return p(t, clamp=clamp)

    b = [at(p) for p in dyn.b]
    b_hat = [bi + at(bt) for bi, bt in zip(b, dyn.b_tilde)]
    sx = [at(p) for p in dyn.sigma_x]
    sig = [[at(p) for p in dyn.sigma[ell]] for ell in range(dyn.kappa)]
    sig_hat = [
        [s + at(st) for s, st in zip(sig[ell], dyn.sigma_tilde[ell])] for ell in range(dyn.kappa)
    ]
    b_x = at(dyn.b_x)
    costs = []
    for pc in game.cost.players:
        Q = at(pc.Q)
        I_ = [at(p) for p in pc.I]
        N_ = [at(p) for p in pc.N]
        G_ = {kl: at(p) for kl, p in pc.G.items()}
        G_hat = dict(G_)
        for kl, p in pc.G_tilde.items():
            G_hat[kl] = G_hat.get(kl, 0.0) + at(p)
            G_.setdefault(kl, np.zeros_like(G_hat[kl]))
        costs.append(
            PlayerCostSnapshot(
                Q=Q,
                Q_hat=Q + at(pc.Q_tilde),
                I=I_,
                I_hat=[a + at(p) for a, p in zip(I_, pc.I_tilde)],
                N=N_,
                N_hat=[a + at(p) for a, p in zip(N_, pc.N_tilde)],
                G=G_,
                G_hat=G_hat,
                L_x=at(pc.L_x),
                L=[at(p) for p in pc.L],
                P=pc.P,
                P_hat=pc.P + pc.P_tilde,
                r=pc.r,
            )
        )
    return CoefficientSnapshot(
        t=float(t),
        rho=game.rho,
        beta=at(dyn.beta),
        b_x=b_x,
        b_x_hat=b_x + at(dyn.b_x_tilde),
        b=b,
        b_hat=b_hat,
        B=np.hstack(b),
        B_hat=np.hstack(b_hat),
        gamma=[at(p) for p in dyn.gamma],
        sigma_x=sx,
        sigma_x_hat=[s + at(p) for s, p in zip(sx, dyn.sigma_x_tilde)],
        sigma=sig,
        sigma_hat=sig_hat,
        Sig=[np.hstack(row) for row in sig],
        Sig_hat=[np.hstack(row) for row in sig_hat],
        costs=costs,
    )


def sample(game: GameSpec, t: float) -> CoefficientSnapshot:
    """Freeze every coefficient of ``game`` at time ``t``.

    Finite horizon: ``t`` must lie in ``[0, T]``.  Infinite horizon: any
    ``t >= 0``; non-constant paths hold their last value past their grid.

    Raises:
        RangeError: if ``t`` is outside the admissible span.
    """
    if t < -_T_TOL or (not game.is_infinite and t > game.horizon + _T_TOL):
        raise RangeError(f"t={t} outside [0, {game.horizon}]")
    if game.is_constant:
        snap = game._snapshot0
        if snap is None:
            snap = _snapshot(game, 0.0, clamp=True)
            object.__setattr__(game, "_snapshot0", snap)
        return snap
    return _snapshot(game, t, clamp=game.is_infinite)


# ---------------------------------------------------------------------------
# Assumption checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionResult:
    name: str
    player: int | None
    passed: bool
    margin: float
    t_worst: float | None = None
    detail: str = ""


@dataclass(frozen=True)
class AssumptionReport:
    conditions: tuple[ConditionResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def failures(self) -> list[ConditionResult]:
        return [c for c in self.conditions if not c.passed]

    def get(self, name: str, player: int | None = None) -> ConditionResult:
        for c in self.conditions:
            if c.name == name and c.player == player:
                return c
        raise KeyError((name, player))


def _min_eig(m: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (m + m.T)).min())


def _schur_margin(q: np.ndarray, i_: np.ndarray, n_: np.ndarray) -> float:
    try:
        if np.linalg.cond(n_) > 1e12:
            return -math.inf
        return _min_eig(q - i_.T @ np.linalg.solve(n_, i_))
    except np.linalg.LinAlgError:
        return -math.inf


def _op_norm(m: np.ndarray) -> float:
    return float(np.linalg.norm(m, 2))


def validate_assumptions(game: GameSpec) -> AssumptionReport:
    """Check the standing convexity conditions and, for infinite horizon, stationarity and discounting.

    Each condition carries its worst margin over the coefficient knots; a
    singular or indefinite control cost is reported as a failure, never raised.
    """
    times = game.knots()
    snaps = [sample(game, float(t)) for t in times]
    out: list[ConditionResult] = []
    for i in range(game.n):
        for hatted in (False, True):
            prefix = "mean_" if hatted else ""
            n_m, q_m = (math.inf, None), (math.inf, None)
            for s in snaps:
                c = s.costs[i]
                nii = c.N_hat[i] if hatted else c.N[i]
                q = c.Q_hat if hatted else c.Q
                ii = c.I_hat[i] if hatted else c.I[i]
                e = _min_eig(nii)
                if e < n_m[0]:
                    n_m = (e, s.t)
                sm = _schur_margin(q, ii, nii) if e > 0 else -math.inf
                if sm < q_m[0]:
                    q_m = (sm, s.t)
            p = game.cost.players[i]
            pm = _min_eig(p.P + p.P_tilde if hatted else p.P)
            out.append(ConditionResult(f"{prefix}control_cost_positive", i, n_m[0] > 0.0, n_m[0], n_m[1]))
            out.append(ConditionResult(f"{prefix}terminal_cost_psd", i, pm >= -PSD_TOL, pm))
            q_margin = q_m[0] if math.isfinite(q_m[0]) else 0.0
            out.append(
                ConditionResult(
                    f"{prefix}state_cost_schur_psd",
                    i,
                    math.isfinite(q_m[0]) and q_m[0] >= -PSD_TOL,
                    q_margin,
                    q_m[1],
                    "" if math.isfinite(q_m[0]) else "control cost singular",
                )
            )
    if game.is_infinite:
        moving = [p for p in game.dynamics.paths() if not p.is_constant]
        for pc in game.cost.players:
            lin = {id(pc.L_x), *(id(x) for x in pc.L)}
            moving += [p for p in pc.paths() if not p.is_constant and id(p) not in lin]
        out.append(ConditionResult("constant_coefficients", None, not moving, float(-len(moving))))
        s = snaps[0]
        bound = 2.0 * (
            _op_norm(s.b_x)
            + _op_norm(s.b_x_hat - s.b_x)
            + 8.0 * sum(_op_norm(a) ** 2 + _op_norm(h - a) ** 2 for a, h in zip(s.sigma_x, s.sigma_x_hat))
        )
        margin = game.rho - bound
        out.append(ConditionResult("discount_dominates_drift", None, margin > 0.0, margin))
    return AssumptionReport(tuple(out))


# ---------------------------------------------------------------------------
# Construction helpers and file format
# ---------------------------------------------------------------------------


def make_game(
    *,
    d: int,
    control_dims: Sequence[int],
    kappa: int = 1,
    horizon: float,
    rho: float,
    x0_mean=None,
    x0_cov=None,
    dynamics: Mapping | None = None,
    players: Sequence[Mapping] | None = None,
) -> GameSpec:
    """Build a :class:`GameSpec` from plain nested data, zero-filling omitted entries.

    ``dynamics`` keys: ``beta, b_x, b_x_tilde, gamma, sigma_x, sigma_x_tilde``
    (the per-noise ones as lists) and ``controls``, a per-player list of
    ``{b, b_tilde, sigma, sigma_tilde}`` where ``sigma`` is a per-noise list.
    Each entry of ``players`` may hold ``Q, Q_tilde, L_x, P, P_tilde, r``,
    ``blocks`` (a per-player list of ``{I, I_tilde, N, N_tilde, L}``) and
    ``cross`` (a list of ``{k, l, G, G_tilde}``).  Any matrix may be given as
    ``{grid: [...], values: [...]}`` for time dependence.
    """
    dims = tuple(int(x) for x in control_dims)
    n = len(dims)
    dyn_in = dict(dynamics or {})
    ctrl = list(dyn_in.get("controls") or [{}] * n)
    if len(ctrl) != n:
        raise DimensionError(f"dynamics.controls needs {n} entries")

    def per_noise(key: str, shape: tuple[int, ...]) -> tuple[CoefficientPath, ...]:
        raw = dyn_in.get(key)
        if raw is None:
            raw = [None] * kappa
        if len(raw) != kappa:
            raise DimensionError(f"dynamics.{key} needs one entry per noise ({kappa})")
        return tuple(_as_path(v, shape, f"{key}[{ell}]") for ell, v in enumerate(raw))

    def ctrl_noise(i: int, key: str) -> list:
        raw = (ctrl[i] or {}).get(key)
        if raw is None:
            return [None] * kappa
        if len(raw) != kappa:
            raise DimensionError(f"controls[{i}].{key} needs one entry per noise ({kappa})")
        return list(raw)

    sig = [ctrl_noise(i, "sigma") for i in range(n)]
    sig_t = [ctrl_noise(i, "sigma_tilde") for i in range(n)]
    dyn = DynamicsSpec(
        d=d,
        control_dims=dims,
        kappa=kappa,
        beta=_as_path(dyn_in.get("beta"), (d,), "beta"),
        b_x=_as_path(dyn_in.get("b_x"), (d, d), "b_x"),
        b_x_tilde=_as_path(dyn_in.get("b_x_tilde"), (d, d), "b_x_tilde"),
        b=tuple(_as_path((ctrl[i] or {}).get("b"), (d, dims[i]), f"b[{i}]") for i in range(n)),
        b_tilde=tuple(
            _as_path((ctrl[i] or {}).get("b_tilde"), (d, dims[i]), f"b_tilde[{i}]") for i in range(n)
        ),
        gamma=per_noise("gamma", (d,)),
        sigma_x=per_noise("sigma_x", (d, d)),
        sigma_x_tilde=per_noise("sigma_x_tilde", (d, d)),
        sigma=tuple(
            tuple(_as_path(sig[i][ell], (d, dims[i]), f"sigma[{i}][{ell}]") for i in range(n))
            for ell in range(kappa)
        ),
        sigma_tilde=tuple(
            tuple(_as_path(sig_t[i][ell], (d, dims[i]), f"sigma_tilde[{i}][{ell}]") for i in range(n))
            for ell in range(kappa)
        ),
    )
    players = list(players or [{}] * n)
    if len(players) != n:
        raise DimensionError(f"players needs {n} entries")
    costs = []
    for i, raw in enumerate(players):
        raw = dict(raw or {})
        blocks = list(raw.get("blocks") or [{}] * n)
        if len(blocks) != n:
            raise DimensionError(f"players[{i}].blocks needs {n} entries")
        blocks = [dict(b or {}) for b in blocks]
        G, G_t = {}, {}
        for entry in raw.get("cross") or []:
            k, l = int(entry["k"]), int(entry["l"])
            if k == l or not (0 <= k < n and 0 <= l < n):
                raise DimensionError(f"players[{i}].cross: invalid pair ({k}, {l})")
            G[(k, l)] = _as_path(entry.get("G"), (dims[k], dims[l]), f"G[{k},{l}]")
            G_t[(k, l)] = _as_path(entry.get("G_tilde"), (dims[k], dims[l]), f"G_tilde[{k},{l}]")
        n_default = [np.zeros((dims[k], dims[k])) for k in range(n)]
        costs.append(
            PlayerCost(
                Q=_as_path(raw.get("Q"), (d, d), "Q"),
                Q_tilde=_as_path(raw.get("Q_tilde"), (d, d), "Q_tilde"),
                I=tuple(_as_path(b.get("I"), (dims[k], d), f"I[{k}]") for k, b in enumerate(blocks)),
                I_tilde=tuple(
                    _as_path(b.get("I_tilde"), (dims[k], d), f"I_tilde[{k}]") for k, b in enumerate(blocks)
                ),
                N=tuple(
                    _as_path(b.get("N", n_default[k]), (dims[k], dims[k]), f"N[{k}]")
                    for k, b in enumerate(blocks)
                ),
                N_tilde=tuple(
                    _as_path(b.get("N_tilde"), (dims[k], dims[k]), f"N_tilde[{k}]")
                    for k, b in enumerate(blocks)
                ),
                G=G,
                G_tilde=G_t,
                L_x=_as_path(raw.get("L_x"), (d,), "L_x"),
                L=tuple(_as_path(b.get("L"), (dims[k],), f"L[{k}]") for k, b in enumerate(blocks)),
                P=np.reshape(np.asarray(raw.get("P", np.zeros((d, d))), dtype=float), (d, d)),
                P_tilde=np.reshape(np.asarray(raw.get("P_tilde", np.zeros((d, d))), dtype=float), (d, d)),
                r=np.reshape(np.asarray(raw.get("r", np.zeros(d)), dtype=float), (d,)),
            )
        )
    return GameSpec(
        dynamics=dyn,
        cost=CostSpec(tuple(costs), float(rho)),
        horizon=float(horizon),
        x0_mean=np.zeros(d) if x0_mean is None else np.asarray(x0_mean, dtype=float),
        x0_cov=np.zeros((d, d)) if x0_cov is None else np.asarray(x0_cov, dtype=float),
    )


def game_from_dict(doc: Mapping) -> GameSpec:
    """Parse the structured game document (see README for the schema)."""
    try:
        dims = doc["dimensions"]
        d = int(dims["state"])
        controls = [int(x) for x in dims["controls"]]
        kappa = int(dims.get("noises", 1))
        horizon_raw = doc["horizon"]
        if isinstance(horizon_raw, str):
            if horizon_raw.strip().lower() not in ("infinite", "inf"):
                raise ConfigError(f"horizon must be a number or 'infinite', got {horizon_raw!r}")
            horizon = math.inf
        else:
            horizon = float(horizon_raw)
        init = doc.get("initial_state") or {}
        return make_game(
            d=d,
            control_dims=controls,
            kappa=kappa,
            horizon=horizon,
            rho=float(doc.get("discount", 0.0)),
            x0_mean=init.get("mean"),
            x0_cov=init.get("cov"),
            dynamics=doc.get("dynamics"),
            players=doc.get("players"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed game document: {exc!r}") from exc


def _path_doc(p: CoefficientPath):
    if p.grid.size == 1:
        return p.values[0].tolist()
    return {"grid": p.grid.tolist(), "values": p.values.tolist()}


def game_to_dict(game: GameSpec) -> dict:
    """Inverse of :func:`game_from_dict`."""
    dyn = game.dynamics
    doc: dict = {
        "dimensions": {"state": dyn.d, "controls": list(dyn.control_dims), "noises": dyn.kappa},
        "horizon": "infinite" if game.is_infinite else float(game.horizon),
        "discount": float(game.rho),
        "initial_state": {"mean": game.x0_mean.tolist(), "cov": game.x0_cov.tolist()},
        "dynamics": {
            "beta": _path_doc(dyn.beta),
            "b_x": _path_doc(dyn.b_x),
            "b_x_tilde": _path_doc(dyn.b_x_tilde),
            "gamma": [_path_doc(p) for p in dyn.gamma],
            "sigma_x": [_path_doc(p) for p in dyn.sigma_x],
            "sigma_x_tilde": [_path_doc(p) for p in dyn.sigma_x_tilde],
            "controls": [
                {
                    "b": _path_doc(dyn.b[i]),
                    "b_tilde": _path_doc(dyn.b_tilde[i]),
                    "sigma": [_path_doc(dyn.sigma[ell][i]) for ell in range(dyn.kappa)],
                    "sigma_tilde": [_path_doc(dyn.sigma_tilde[ell][i]) for ell in range(dyn.kappa)],
                }
                for i in range(dyn.n)
            ],
        },
        "players": [],
    }
    for pc in game.cost.players:
        doc["players"].append(
            {
                "Q": _path_doc(pc.Q),
                "Q_tilde": _path_doc(pc.Q_tilde),
                "L_x": _path_doc(pc.L_x),
                "P": pc.P.tolist(),
                "P_tilde": pc.P_tilde.tolist(),
                "r": pc.r.tolist(),
                "blocks": [
                    {
                        "I": _path_doc(pc.I[k]),
                        "I_tilde": _path_doc(pc.I_tilde[k]),
                        "N": _path_doc(pc.N[k]),
                        "N_tilde": _path_doc(pc.N_tilde[k]),
                        "L": _path_doc(pc.L[k]),
                    }
                    for k in range(dyn.n)
                ],
                "cross": [
                    {
                        "k": k,
                        "l": l,
                        "G": _path_doc(pc.G.get((k, l), CoefficientPath.constant(np.zeros(p.shape)))),
                        "G_tilde": _path_doc(p),
                    }
                    for (k, l), p in sorted(pc.G_tilde.items())
                ],
            }
        )
    return doc


def load_game(path: str) -> GameSpec:
    """Read a YAML (or JSON, a YAML subset) game document."""
    import yaml

    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"game file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    return game_from_dict(doc)


def save_game(game: GameSpec, path: str) -> None:
    import yaml

    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(game_to_dict(game), fh, sort_keys=False)
