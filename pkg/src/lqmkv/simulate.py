"""
Euler-Maruyama simulation of the controlled mean-field SDE under affine laws.

Random numbers come from counter-based Philox streams keyed by ``(seed,
block)``; every block holds :data:`BLOCK_SIZE` paths and always draws a full
block (initial states first, then one ``BLOCK_SIZE x kappa`` normal array per
step), so a path's noise does not depend on ``n_paths`` or on how blocks are
grouped.

With a deviation for player i, each path carries two states driven by the
same noise: the reference state under the law profile and the own state, in
which player i uses its deviation law while every opponent keeps playing its
law on the reference state.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import _moments as mom
from .equilibrium import AffineProfile, PlayerLaw
from .errors import ConfigError, SimulationError
from .model import CoefficientSnapshot, GameSpec, sample

BLOCK_SIZE = 4096
_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings.

    ``record_every`` thins the stored time points.  ``substeps`` > 1 draws that
    many normals per step and sums them, so a run with ``n_steps / k`` steps
    and ``substeps = k`` sees the same Brownian path as the fine run.
    ``cost_rule`` is the quadrature of the running cost.
    """

    n_paths: int = 100_000
    n_steps: int = 1000
    t_end: float = 1.0
    seed: int = 0
    mean_mode: str = "analytic"
    record_every: int = 1
    track_costs: bool = True
    cost_rule: str = "left"
    substeps: int = 1

    def __post_init__(self) -> None:
        if self.n_paths < 2:
            raise ConfigError("n_paths must be at least 2")
        if self.n_steps < 1:
            raise ConfigError("n_steps must be at least 1")
        if not (self.t_end > 0.0 and math.isfinite(self.t_end)):
            raise ConfigError("t_end must be positive and finite")
        if self.mean_mode not in ("analytic", "particle"):
            raise ConfigError(f"mean_mode must be 'analytic' or 'particle', got {self.mean_mode!r}")
        if self.record_every < 1:
            raise ConfigError("record_every must be at least 1")
        if self.cost_rule not in ("left", "trapezoid"):
            raise ConfigError(f"cost_rule must be 'left' or 'trapezoid', got {self.cost_rule!r}")
        if self.substeps < 1:
            raise ConfigError("substeps must be at least 1")

    @property
    def dt(self) -> float:
        return self.t_end / self.n_steps

    def record_steps(self) -> np.ndarray:
        idx = np.arange(0, self.n_steps + 1, self.record_every)
        if idx[-1] != self.n_steps:
            idx = np.append(idx, self.n_steps)
        return idx


@dataclass
class PathEnsemble:
    """Simulated paths at the recorded times.

    ``costs[p, k]`` is player k's discounted running cost accumulated up to
    ``t_end`` and ``cum_costs[p, j, k]`` the same up to ``times[j]``.  Player
    k's cost is taken on the own state if k deviates, else on the reference
    state.  ``terminal[p, k]`` holds the discounted terminal cost when
    ``t_end`` equals a finite horizon, else zero.
    """

    times: np.ndarray
    states: np.ndarray
    ref_states: np.ndarray
    means: np.ndarray
    ref_means: np.ndarray
    controls: np.ndarray
    costs: np.ndarray
    cum_costs: np.ndarray
    terminal: np.ndarray
    final_rate: np.ndarray
    rho: float
    infinite: bool
    deviator: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    def total_costs(self, i: int) -> np.ndarray:
        return self.costs[:, i] + self.terminal[:, i]

    def tail_bound(self, i: int) -> float:
        """Infinite horizon: e^{-rho t_end} (cost rate at t_end) / rho; zero otherwise."""
        if not self.infinite:
            return 0.0
        return float(abs(self.final_rate[:, i].mean()) / self.rho)

    @staticmethod
    def concat(parts: list["PathEnsemble"]) -> "PathEnsemble":
        first = parts[0]
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts], axis=0)  # noqa: E731
        return PathEnsemble(
            first.times,
            cat("states"),
            cat("ref_states"),
            first.means,
            first.ref_means,
            cat("controls"),
            cat("costs"),
            cat("cum_costs"),
            cat("terminal"),
            cat("final_rate"),
            first.rho,
            first.infinite,
            first.deviator,
            dict(first.meta),
        )


def _generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed & _SEED_MASK, block]))


def _increments(g: np.random.Generator, substeps: int, kappa: int) -> np.ndarray:
    """Sum of ``substeps`` consecutive standard-normal draws (one per fine step)."""
    z = g.standard_normal((BLOCK_SIZE, kappa))
    for _ in range(substeps - 1):
        z += g.standard_normal((BLOCK_SIZE, kappa))
    return z


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("LQMKV_THREADS", "1")))
    except ValueError as exc:
        raise ConfigError("LQMKV_THREADS must be an integer") from exc


def _cost_form(snap: CoefficientSnapshot, k: int, sl: list[slice], m: np.ndarray, abar: np.ndarray):
    """f^k as ``z' M z + v' z + c0`` in ``z = (x - m, a - abar)``."""
    cs = snap.costs[k]
    d = m.size
    da = abar.size
    M = np.zeros((d + da, d + da))
    M[:d, :d] = cs.Q
    v = np.zeros(d + da)
    v[:d] = 2.0 * cs.L_x
    c0 = m @ cs.Q_hat @ m + 2.0 * cs.L_x @ m
    for j, s in enumerate(sl):
        js = slice(d + s.start, d + s.stop)
        M[js, :d] += 2.0 * cs.I[j]
        M[js, js] += cs.N[j]
        v[:d] += 2.0 * abar[s] @ cs.I[j]
        v[js] += 2.0 * cs.L[j]
        c0 += 2.0 * abar[s] @ cs.I_hat[j] @ m + abar[s] @ cs.N_hat[j] @ abar[s] + 2.0 * cs.L[j] @ abar[s]
    for (j, l), G in cs.G.items():
        M[d + sl[j].start : d + sl[j].stop, d + sl[l].start : d + sl[l].stop] += G
        c0 += abar[sl[j]] @ cs.G_hat[(j, l)] @ abar[sl[l]]
    return M, v, c0


def _running_cost(
    snap: CoefficientSnapshot,
    k: int,
    sl: list[slice],
    x: np.ndarray,
    m: np.ndarray,
    a: np.ndarray,
    abar: np.ndarray,
) -> np.ndarray:
    """Per-path f^k for states ``x`` (P x d) with mean ``m`` and controls ``a`` with mean ``abar``."""
    M, v, c0 = _cost_form(snap, k, sl, m, abar)
    d = m.size
    z = np.empty((x.shape[0], d + abar.size))
    z[:, :d] = x - m
    z[:, d:] = a - abar
    # Row sums via a matmul; reductions over a short axis are slow.
    return ((z @ M) * z) @ np.ones(z.shape[1]) + z @ v + c0


def _terminal_cost(game: GameSpec, k: int, x: np.ndarray, m: np.ndarray) -> np.ndarray:
    pc = game.cost.players[k]
    xt = x - m
    return np.einsum("pi,ij,pj->p", xt, pc.P, xt) + m @ (pc.P + pc.P_tilde) @ m + 2.0 * x @ pc.r


def _controls(gains, x: np.ndarray, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    A, Ah, c = gains
    abar = Ah @ m + c
    return (x - m) @ A.T + abar, abar


def _step(snap: CoefficientSnapshot, x, m, a, abar, dt, dW) -> np.ndarray:
    at = a - abar
    drift = snap.beta + snap.b_x_hat @ m + snap.B_hat @ abar
    out = x + dt * (drift + (x - m) @ snap.b_x.T + at @ snap.B.T)
    for ell in range(len(snap.sigma_x)):
        vol0 = snap.gamma[ell] + snap.sigma_x_hat[ell] @ m + snap.Sig_hat[ell] @ abar
        vol = vol0 + (x - m) @ snap.sigma_x[ell].T + at @ snap.Sig[ell].T
        out = out + vol * dW[:, ell : ell + 1]
    return out


def _run_group(
    game: GameSpec,
    law: AffineProfile,
    cfg: SimConfig,
    blocks: list[int],
    n_used: int,
    deviation: PlayerLaw | None,
    analytic: mom.MomentPath | None,
) -> PathEnsemble:
    d, kappa, n = game.d, game.kappa, game.n
    sl = game.control_slices()
    gens = [_generator(cfg.seed, b) for b in blocks]
    x0 = np.concatenate([g.multivariate_normal(game.x0_mean, game.x0_cov, size=BLOCK_SIZE, method="eigh") for g in gens])
    x0 = x0[:n_used]
    dev = deviation.player if deviation is not None else None
    x = x0.copy()
    xr = x0.copy()
    rec = cfg.record_steps()
    n_rec = rec.size
    times = rec * cfg.dt
    states = np.empty((n_used, n_rec, d))
    ref_states = np.empty((n_used, n_rec, d)) if dev is not None else states
    controls = np.empty((n_used, n_rec, game.d_a))
    means = np.empty((n_rec, d))
    ref_means = np.empty((n_rec, d))
    cum = np.zeros((n_used, n_rec, n))
    running = np.zeros((n_used, n))
    dt = cfg.dt
    rho = game.rho
    r = 0
    for j in range(cfg.n_steps + 1):
        t = j * dt
        if j == cfg.n_steps:
            t = cfg.t_end
        snap = sample(game, min(t, game.horizon))
        if analytic is not None:
            m, mr = analytic.m[j], analytic.mr[j]
        else:
            m, mr = x.mean(axis=0), xr.mean(axis=0)
        gains = law.gains(t)
        ar, abar_r = _controls(gains, xr, mr)
        if dev is None:
            a, abar = ar, abar_r
        else:
            a, abar = ar.copy(), abar_r.copy()
            s = sl[dev]
            own = deviation.full_gains(t)
            a[:, s], abar[s] = _controls(own[:3], x, m)
            if own[3] is not None:
                a[:, s] += (xr - mr) @ own[3].T
        disc = math.exp(-rho * t)
        rate = np.zeros((n_used, n))
        for k in range(n if cfg.track_costs else 0):
            if k == dev:
                rate[:, k] = _running_cost(snap, k, sl, x, m, a, abar)
            else:
                rate[:, k] = _running_cost(snap, k, sl, xr, mr, ar, abar_r)
        rate *= disc
        if j > 0:
            running += dt * rate_prev if cfg.cost_rule == "left" else 0.5 * dt * (rate_prev + rate)
        rate_prev = rate
        if r < n_rec and rec[r] == j:
            states[:, r] = x
            if dev is not None:
                ref_states[:, r] = xr
            controls[:, r] = a
            means[r], ref_means[r] = m, mr
            cum[:, r] = running
            r += 1
        if j == cfg.n_steps:
            break
        dW = np.concatenate([_increments(g, cfg.substeps, kappa) for g in gens])[:n_used] * math.sqrt(dt / cfg.substeps)
        x_new = _step(snap, x, m, a, abar, dt, dW)
        if dev is not None:
            xr = _step(snap, xr, mr, ar, abar_r, dt, dW)
        else:
            xr = x_new
        x = x_new
        bad = ~np.all(np.isfinite(x), axis=1) | ~np.all(np.isfinite(xr), axis=1)
        if bad.any():
            p = int(np.argmax(bad))
            raise SimulationError(
                f"non-finite state on path {blocks[0] * BLOCK_SIZE + p} at step {j + 1}", path=p, step=j + 1
            )
    terminal = np.zeros((n_used, n))
    if not game.is_infinite and abs(cfg.t_end - game.horizon) <= 1e-12 * max(1.0, game.horizon):
        disc = math.exp(-rho * cfg.t_end)
        for k in range(n):
            xs, ms = (x, m) if k == dev else (xr, mr)
            terminal[:, k] = disc * _terminal_cost(game, k, xs, ms)
    return PathEnsemble(
        times, states, ref_states, means, ref_means, controls, running, cum, terminal, rate, rho, game.is_infinite, dev
    )


def _check(game: GameSpec, cfg: SimConfig) -> None:
    if not game.is_infinite and cfg.t_end > game.horizon * (1.0 + 1e-12):
        raise ConfigError(f"t_end={cfg.t_end} exceeds the horizon {game.horizon}")


def analytic_means(game: GameSpec, law: AffineProfile, cfg: SimConfig, deviation: PlayerLaw | None = None) -> mom.MomentPath:
    grid = np.linspace(0.0, cfg.t_end, cfg.n_steps + 1)
    i = None if deviation is None else deviation.player
    return mom.moment_path(game, law.gains, grid, i, None if deviation is None else deviation.full_gains)


def iter_blocks(
    game: GameSpec,
    law: AffineProfile,
    cfg: SimConfig,
    deviation: PlayerLaw | None = None,
    group: int = 4,
) -> Iterator[PathEnsemble]:
    """Yield ensembles of up to ``group`` RNG blocks each (analytic mean mode only)."""
    if cfg.mean_mode != "analytic":
        raise ConfigError("block streaming needs mean_mode='analytic'")
    _check(game, cfg)
    mp = analytic_means(game, law, cfg, deviation)
    n_blocks = -(-cfg.n_paths // BLOCK_SIZE)

    def run(b0: int) -> PathEnsemble:
        bl = list(range(b0, min(n_blocks, b0 + group)))
        used = min(cfg.n_paths - b0 * BLOCK_SIZE, len(bl) * BLOCK_SIZE)
        ens = _run_group(game, law, cfg, bl, used, deviation, mp)
        ens.meta["first_path"] = b0 * BLOCK_SIZE
        return ens

    starts = range(0, n_blocks, group)
    threads = _threads()
    if threads == 1:
        yield from map(run, starts)
    else:
        # Groups are independent; map keeps their order.
        with ThreadPoolExecutor(threads) as pool:
            yield from pool.map(run, starts)


def simulate(game: GameSpec, law: AffineProfile, cfg: SimConfig, deviation: PlayerLaw | None = None) -> PathEnsemble:
    """Simulate ``cfg.n_paths`` paths under ``law`` (optionally with player ``deviation.player`` deviating)."""
    _check(game, cfg)
    if cfg.mean_mode == "particle":
        n_blocks = -(-cfg.n_paths // BLOCK_SIZE)
        ens = _run_group(game, law, cfg, list(range(n_blocks)), cfg.n_paths, deviation, None)
    else:
        ens = PathEnsemble.concat(list(iter_blocks(game, law, cfg, deviation)))
    ens.meta.update(seed=cfg.seed, n_steps=cfg.n_steps, t_end=cfg.t_end, mean_mode=cfg.mean_mode)
    return ens


def estimate_cost(ens: PathEnsemble, i: int) -> tuple[float, float]:
    """Sample mean and standard error of player i's discounted cost."""
    c = ens.total_costs(i)
    if c.size < 2:
        raise ConfigError("need at least two paths for a standard error")
    return float(c.mean()), float(c.std(ddof=1) / math.sqrt(c.size))
