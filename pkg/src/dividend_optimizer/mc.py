"""Monte Carlo evaluation of an extracted dividend policy.

Paths are simulated in fixed-size blocks; each block draws from its own
substream spawned from one SeedSequence, so the estimate does not depend on
how many threads run the blocks. Liquidated and ruined paths leave the
block and normals are drawn for live paths only; a block stops once none
are left. Antithetic runs negate the block's stream; they mirror
a plain run path by path only while both have the same live set.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.interpolate import RegularGridInterpolator

from .analysis import Boundaries
from .errors import OutOfBoxError
from .grid import Grid
from .model import CIR, CustomDrift, ModelParams

logger = logging.getLogger(__name__)

CENSOR_LEVEL = 1e-4          # e^{-r T} at the default horizon
DEFAULT_BLOCK = 4096


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 10_000
    dt: float = 1e-3                 # years
    t_horizon: float | None = None   # years; default ln(1/CENSOR_LEVEL)/r
    seed: int = 0
    antithetic: bool = False
    block_size: int = DEFAULT_BLOCK

    def __post_init__(self) -> None:
        if self.n_paths < 100:
            raise ValueError(f"mc.n_paths must be at least 100, got {self.n_paths}")
        if not self.dt > 0:
            raise ValueError(f"mc.dt must be positive, got {self.dt}")
        if self.t_horizon is not None and self.t_horizon < 100 * self.dt:
            raise ValueError(f"mc.t_horizon must be at least 100*dt = {100 * self.dt:g}, got {self.t_horizon}")
        if self.block_size < 1:
            raise ValueError(f"mc.block_size must be positive, got {self.block_size}")

    def horizon(self, r: float) -> float:
        if self.t_horizon is not None:
            return self.t_horizon
        return max(math.log(1.0 / CENSOR_LEVEL) / r + self.dt, 100 * self.dt)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_ruined: int
    n_censored: int
    n_paths: int = 0


@dataclass
class _BlockResult:
    payoff: np.ndarray
    ruined: int
    censored: int


def _simulate_block(model: ModelParams, boundaries: Boundaries, start: tuple[float, float], n: int,
                    n_steps: int, dt: float, seed: np.random.SeedSequence, sign: float) -> _BlockResult:
    """Simulate ``n`` paths; only live paths are stepped and drawn for."""
    rng = np.random.default_rng(seed)
    drift = model.drift
    lo, hi = drift.domain
    clamp_mu = isinstance(drift, (CIR, CustomDrift))
    sqrt_dt = math.sqrt(dt)
    rho, rho_c = model.rho, math.sqrt(max(0.0, 1.0 - model.rho**2))
    mu_grid = boundaries.mu
    dmu = mu_grid[1] - mu_grid[0]
    no_retain = np.isnan(boundaries.upper)
    lower = np.where(no_retain, np.inf, boundaries.lower)
    upper = np.where(no_retain, -np.inf, boundaries.upper)
    mu_star = -np.inf if boundaries.mu_star is None else boundaries.mu_star

    payoff = np.zeros(n)
    # live paths only, compacted after every step; owner maps back into payoff
    owner = np.arange(n)
    x = np.full(n, float(start[0]))
    mu = np.full(n, float(start[1]))
    ruined = 0
    for step in range(n_steps + 1):
        disc = math.exp(-model.r * step * dt)
        j = np.clip(np.rint((mu - mu_grid[0]) / dmu).astype(int), 0, mu_grid.size - 1)
        # liquidation pays everything and stops
        liquidate = (mu <= mu_star) | no_retain[j] | (x < lower[j])
        if liquidate.any():
            payoff[owner[liquidate]] += disc * x[liquidate]
            keep = ~liquidate
            owner, x, mu, j = owner[keep], x[keep], mu[keep], j[keep]
        if owner.size == 0:
            logger.debug("all %d paths stopped after %d of %d steps", n, step, n_steps)
            break
        # lump payment of the excess over the barrier
        excess = np.maximum(x - upper[j], 0.0)
        payoff[owner] += disc * excess
        x = x - excess
        if step == n_steps:
            break
        z = sign * rng.standard_normal((2, owner.size))
        dw = sqrt_dt * z[0]
        dw_tilde = sqrt_dt * (rho * z[0] + rho_c * z[1])
        x_new = x + mu * dt + model.sigma * dw
        mu = mu + drift.rate(mu) * dt + drift.volatility(mu) * dw_tilde
        if clamp_mu:
            mu = np.clip(mu, lo, hi)
        x = x_new
        ruin = x < 0
        if ruin.any():
            ruined += int(ruin.sum())
            keep = ~ruin
            owner, x, mu = owner[keep], x[keep], mu[keep]
    return _BlockResult(payoff=payoff, ruined=ruined, censored=int(owner.size))


def simulate_policy(model: ModelParams, boundaries: Boundaries, start: tuple[float, float], cfg: SimConfig,
                    threads: int = 1) -> McEstimate:
    """Euler-Maruyama estimate of the discounted dividends paid under ``boundaries``."""
    x0, mu0 = start
    if not (boundaries.x_min <= x0 <= boundaries.x_max and boundaries.mu[0] <= mu0 <= boundaries.mu[-1]):
        raise OutOfBoxError(f"start (x={x0}, mu={mu0}) lies outside the grid box")
    n_steps = int(math.ceil(cfg.horizon(model.r) / cfg.dt))
    n_blocks = int(math.ceil(cfg.n_paths / cfg.block_size))
    sizes = [min(cfg.block_size, cfg.n_paths - b * cfg.block_size) for b in range(n_blocks)]
    seeds = np.random.SeedSequence(cfg.seed).spawn(n_blocks)
    sign = -1.0 if cfg.antithetic else 1.0

    def run(block: int) -> _BlockResult:
        return _simulate_block(model, boundaries, start, sizes[block], n_steps, cfg.dt, seeds[block], sign)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(n_blocks)))
    else:
        results = [run(b) for b in range(n_blocks)]

    payoff = np.concatenate([r.payoff for r in results])
    mean = float(payoff.mean())
    std_error = float(payoff.std(ddof=1) / math.sqrt(payoff.size))
    estimate = McEstimate(mean=mean, std_error=std_error, n_ruined=sum(r.ruined for r in results),
                          n_censored=sum(r.censored for r in results), n_paths=int(payoff.size))
    logger.info("MC at (x=%g, mu=%g): %.6f +/- %.6f (%d ruined, %d censored of %d)", x0, mu0, mean,
                std_error, estimate.n_ruined, estimate.n_censored, estimate.n_paths)
    return estimate


def grid_value_at(grid: Grid, value: np.ndarray, x: float, mu: float) -> float:
    interp = RegularGridInterpolator((grid.x, grid.mu), value, method="linear")
    return float(interp([[x, mu]])[0])


def compare_with_grid(model: ModelParams, grid: Grid, value: np.ndarray, boundaries: Boundaries,
                      points: list[tuple[float, float]], cfg: SimConfig, threads: int = 1,
                      allowance: float = 0.05) -> pd.DataFrame:
    """MC estimate against the interpolated grid value at each point; within = |diff| <= 3 SE + allowance."""
    rows = []
    for x, mu in points:
        est = simulate_policy(model, boundaries, (x, mu), cfg, threads)
        reference = grid_value_at(grid, value, x, mu)
        diff = est.mean - reference
        rows.append({"x": x, "mu": mu, "gridValue": reference, "mcMean": est.mean, "stdError": est.std_error,
                     "nRuined": est.n_ruined, "nCensored": est.n_censored,
                     "within": abs(diff) <= 3.0 * est.std_error + allowance})
    return pd.DataFrame(rows)
