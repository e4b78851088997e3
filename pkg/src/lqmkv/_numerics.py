"""Time grids, Hermite-interpolated solution paths and a backward RK4 driver."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import RangeError, SolverError

DEFAULT_STEPS_PER_UNIT = 2000
COND_LIMIT = 1e12
_T_TOL = 1e-12


def make_grid(t_end: float, steps_per_unit: int = DEFAULT_STEPS_PER_UNIT, knots: np.ndarray | None = None) -> np.ndarray:
    """Uniform grid on ``[0, t_end]`` with at least one step, merged with coefficient ``knots``."""
    n = max(1, int(math.ceil(t_end * steps_per_unit - 1e-9)))
    g = np.linspace(0.0, t_end, n + 1)
    if knots is not None and knots.size:
        k = knots[(knots > 0.0) & (knots < t_end)]
        if k.size:
            g = np.unique(np.concatenate([g, k]))
            g = g[np.concatenate([[True], np.diff(g) > 1e-12 * max(1.0, t_end)])]
    return g


@dataclass(frozen=True)
class GridPath:
    """Solution path on ``grid`` with stored time derivatives.

    Evaluation between grid points uses cubic Hermite interpolation so that
    consumers sampling at RK4 stage midpoints keep fourth-order accuracy.  A
    path with ``grid=None`` is constant.  ``hold`` extends the last value past
    the grid end (infinite-horizon truncation).
    """

    grid: np.ndarray | None
    values: np.ndarray
    derivs: np.ndarray | None = None
    hold: bool = False

    @classmethod
    def constant(cls, value: np.ndarray) -> "GridPath":
        return cls(None, np.asarray(value, dtype=float))

    @property
    def is_constant(self) -> bool:
        return self.grid is None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape if self.grid is None else self.values.shape[1:]

    def __call__(self, t: float) -> np.ndarray:
        if self.grid is None:
            return self.values
        g = self.grid
        if t < g[0] - _T_TOL or (t > g[-1] + _T_TOL and not self.hold):
            raise RangeError(f"t={t} outside solution span [{g[0]}, {g[-1]}]")
        if t >= g[-1]:
            return self.values[-1]
        if t <= g[0]:
            return self.values[0]
        j = int(np.searchsorted(g, t, side="right")) - 1
        if t == g[j]:
            return self.values[j]
        h = g[j + 1] - g[j]
        s = (t - g[j]) / h
        s2, s3 = s * s, s * s * s
        h00 = 2 * s3 - 3 * s2 + 1
        h10 = s3 - 2 * s2 + s
        h01 = -2 * s3 + 3 * s2
        h11 = s3 - s2
        y0, y1 = self.values[j], self.values[j + 1]
        if self.derivs is None:
            return (1 - s) * y0 + s * y1
        return h00 * y0 + h01 * y1 + h * (h10 * self.derivs[j] + h11 * self.derivs[j + 1])

    def at_grid(self, j: int) -> np.ndarray:
        return self.values if self.grid is None else self.values[j]


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def rk4_backward(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    grid: np.ndarray,
    terminal: np.ndarray,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
    layer: str = "ode",
) -> GridPath:
    """Integrate ``y' = rhs(t, y)`` from ``y(grid[-1]) = terminal`` down to ``grid[0]``.

    The terminal value is stored exactly.  ``project`` (e.g. symmetrization) is
    applied after every step.
    """
    m = grid.size - 1
    y = np.array(terminal, dtype=float)
    vals = np.empty((m + 1,) + y.shape)
    ders = np.empty_like(vals)
    vals[m] = y
    k1 = rhs(float(grid[m]), y)
    ders[m] = k1
    for j in range(m, 0, -1):
        t = float(grid[j])
        h = float(grid[j - 1]) - t
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if project is not None:
            y = project(y)
        if not np.all(np.isfinite(y)):
            raise SolverError(f"{layer}: solution blew up near t={grid[j - 1]:.6g}", layer=layer, t=float(grid[j - 1]))
        k1 = rhs(float(grid[j - 1]), y)
        vals[j - 1] = y
        ders[j - 1] = k1
    return GridPath(np.asarray(grid, dtype=float), vals, ders)


def checked_inv(a: np.ndarray, what: str, layer: str, t: float | None) -> np.ndarray:
    """Inverse of a small square matrix, refusing 1-norm condition numbers above ``COND_LIMIT``."""
    if a.shape == (1, 1):
        v = float(a[0, 0])
        if v == 0.0 or not np.isfinite(v):
            c = np.inf
        else:
            return np.array([[1.0 / v]])
    else:
        try:
            inv = np.linalg.inv(a)
            c = float(np.abs(a).sum(axis=0).max() * np.abs(inv).sum(axis=0).max())
        except np.linalg.LinAlgError:
            c = np.inf
        if np.isfinite(c) and c <= COND_LIMIT:
            return inv
    where = "" if t is None else f" at t={t:.6g}"
    raise SolverError(f"{what} is singular (condition {c:.3g}){where}", layer=layer, t=t)


def guarded_solve(a: np.ndarray, b: np.ndarray, what: str, layer: str, t: float | None) -> np.ndarray:
    """``a^{-1} b`` with a condition-number guard."""
    return checked_inv(a, what, layer, t) @ b


def block_diag(*blocks: np.ndarray) -> np.ndarray:
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r : r + b.shape[0], c : c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def simpson_weights(grid: np.ndarray) -> np.ndarray:
    """Composite Simpson weights on a grid with an even number of uniform-pair intervals.

    Odd interval counts fall back to a trapezoid on the last interval.
    """
    m = grid.size - 1
    w = np.zeros(grid.size)
    if m == 0:
        return w
    pairs = m // 2
    for p in range(pairs):
        a, b = 2 * p, 2 * p + 2
        h0, h1 = grid[a + 1] - grid[a], grid[b] - grid[a + 1]
        hs = h0 + h1
        w[a] += hs / 6.0 * (2.0 - h1 / h0)
        w[a + 1] += hs**3 / (6.0 * h0 * h1)
        w[b] += hs / 6.0 * (2.0 - h0 / h1)
    if m % 2:
        h = grid[m] - grid[m - 1]
        w[m - 1] += 0.5 * h
        w[m] += 0.5 * h
    return w
