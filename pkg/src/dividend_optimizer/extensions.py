"""Model variants: proportional issuance, fixed-cost issuance and credit lines.

Issuance controls are penalized with the same K as dividends, read as the
arrival rate of investors. Issuing equity of size i costs the shareholders
(1 + lambda_p) i, plus lambda_f per issuance when fixed costs are present.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.special import expit

from .analysis import Boundaries, extract_boundaries
from .errors import MaskConsistencyError, ModelError
from .grid import Grid, GridSpec
from .model import ModelParams
from .operator import DiscreteOperator, GeneratorScheme
from .solver import (
    DEFAULT_MAX_ITER,
    Controls,
    PolicyField,
    SolveReport,
    ValueField,
    default_K,
    improve_dividends,
    policy_iteration,
    reported_rates,
    run_policy_iteration,
    starting_rates,
)

logger = logging.getLogger(__name__)

CostFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LogisticCost:
    """lambda(mu) = high - (high - low) * logistic((mu - midpoint) / scale)."""

    high: float
    low: float
    midpoint: float = 0.0
    scale: float = 0.25

    def __post_init__(self) -> None:
        if self.high < 0 or self.low < 0:
            raise ModelError(f"issuance costs must be nonnegative, got high={self.high}, low={self.low}")
        if not self.scale > 0:
            raise ModelError(f"issuance cost scale must be positive, got {self.scale}")

    @classmethod
    def constant(cls, value: float) -> "LogisticCost":
        return cls(high=value, low=value)

    def __call__(self, mu: np.ndarray) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        return self.high - (self.high - self.low) * expit((mu - self.midpoint) / self.scale)


# cost curves decaying with profitability
PROPORTIONAL_COST = LogisticCost(high=0.34, low=0.25)
FIXED_COST = LogisticCost(high=0.14, low=0.06)


@dataclass(frozen=True)
class IssuanceSpec:
    lambda_p: CostFn = PROPORTIONAL_COST
    lambda_f: CostFn = LogisticCost.constant(0.0)
    enabled: bool = True

    def costs_on(self, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
        prop = np.broadcast_to(np.asarray(self.lambda_p(grid.mu), dtype=float), (grid.nmu,)).copy()
        fixed = np.broadcast_to(np.asarray(self.lambda_f(grid.mu), dtype=float), (grid.nmu,)).copy()
        for name, cost in (("issuance.lambda_p", prop), ("issuance.lambda_f", fixed)):
            if np.any(np.isnan(cost)) or np.any(cost < 0):
                j = int(np.flatnonzero(np.isnan(cost) | (cost < 0))[0])
                raise ModelError(f"{name} must be nonnegative on the grid; got {cost[j]} at mu = {grid.mu[j]:.6g}")
        return prop, fixed


XLower = Union[float, tuple[tuple[float, float], ...]]


@dataclass(frozen=True)
class CreditLineSpec:
    """Credit at interest rho_minus down to the ruin level x_lower(mu) <= 0.

    ``x_lower`` is a constant or a table of (mu, x) pairs interpolated linearly
    and held constant beyond its ends.
    """

    rho_minus: float = 0.0
    x_lower: XLower = 0.0

    def __post_init__(self) -> None:
        if not (self.rho_minus >= 0 and math.isfinite(self.rho_minus)):
            raise ModelError(f"credit_line.rho_minus must be >= 0, got {self.rho_minus}")
        if isinstance(self.x_lower, tuple):
            if len(self.x_lower) < 2:
                raise ModelError("credit_line.x_lower table needs at least two (mu, x) rows")
            mus = [m for m, _ in self.x_lower]
            if any(b <= a for a, b in zip(mus, mus[1:])):
                raise ModelError("credit_line.x_lower table must be sorted by strictly increasing mu")
            values = [x for _, x in self.x_lower]
        else:
            values = [self.x_lower]
        if any(v > 0 for v in values):
            raise ModelError(f"credit_line.x_lower must be <= 0, got {max(values)}")

    def x_lower_at(self, mu: np.ndarray) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        if isinstance(self.x_lower, tuple):
            table = np.asarray(self.x_lower, dtype=float)
            return np.interp(mu, table[:, 0], table[:, 1])
        return np.full(mu.shape, float(self.x_lower))

    def grid_spec(self, base: GridSpec) -> GridSpec:
        """Extend ``base`` downwards by whole cash steps so every ruin level fits."""
        mu = base.mu_min + np.arange(base.nmu) * base.dmu
        lowest = float(self.x_lower_at(mu).min())
        extra = int(math.ceil(-lowest / base.dx - 1e-9)) if lowest < 0 else 0
        if extra == 0:
            return base
        return GridSpec(x_max=base.x_max, mu_min=base.mu_min, mu_max=base.mu_max, nx=base.nx + extra,
                        nmu=base.nmu, x_min=base.x_min - extra * base.dx,
                        one_sided_at_boundary=base.one_sided_at_boundary)


# --------------------------
# Proportional issuance
# --------------------------

def _forward_gradient(value: np.ndarray, dx: float) -> np.ndarray:
    grad = np.full_like(value, -np.inf)
    grad[:-1] = (value[1:] - value[:-1]) / dx
    return grad


def solve_proportional_issuance(model: ModelParams, grid: Grid, spec: IssuanceSpec, K: float | None = None,
                                tau: float = 0.0, max_iter: int = DEFAULT_MAX_ITER
                                ) -> tuple[ValueField, PolicyField, Boundaries, SolveReport]:
    """Dividends at rate ell and issuance at rate iota, both in [0, K].

    Issue where D+V > 1 + lambda_p; at the ruin row this replaces V = 0 by
    issuing up to the next node.
    """
    K = default_K(grid) if K is None else float(K)
    prop, fixed = spec.costs_on(grid)
    if np.any(fixed > 0):
        logger.warning("proportional issuance ignores the configured fixed cost")
    scheme = GeneratorScheme(model, grid)
    controls = {"ell": starting_rates(np.zeros(grid.shape), scheme, K), "iota": np.zeros(grid.shape)}

    def assemble_fn(c: Controls) -> DiscreteOperator:
        return scheme.assemble(c["ell"], iota=c["iota"], issuance_cost=prop)

    def improve_fn(value: np.ndarray, c: Controls) -> tuple[Controls, int]:
        ell = improve_dividends(value, c["ell"], scheme, K)
        excess = _forward_gradient(value, grid.dx) - (1.0 + prop)[None, :]
        iota = c["iota"].copy()
        iota[excess > 0] = K
        iota[excess < 0] = 0.0
        iota[~scheme.issuable] = 0.0
        switched = int(np.count_nonzero(ell != c["ell"]) + np.count_nonzero(iota != c["iota"]))
        return {"ell": ell, "iota": iota}, switched

    value, controls, report = run_policy_iteration(assemble_fn, improve_fn, controls, K=K, tau=tau,
                                                   max_iter=max_iter, label="proportional issuance")
    policy = PolicyField(ell=reported_rates(controls["ell"], scheme), K=K, iota=controls["iota"])
    boundaries = extract_boundaries(policy, grid, K)
    issuing = controls["iota"] >= 0.5 * K
    columns = np.flatnonzero(issuing[0])
    threshold = float(grid.mu[columns[0]]) if columns.size else None
    boundaries = _with_issuance(boundaries, None, threshold)
    logger.info("proportional issuance: threshold %s", "ABSENT" if threshold is None else f"{threshold:.6g}")
    return value, policy, boundaries, report


def _with_issuance(b: Boundaries, target: np.ndarray | None, threshold: float | None) -> Boundaries:
    return Boundaries(mu=b.mu, lower=b.lower, upper=b.upper, mu_star=b.mu_star, x_min=b.x_min,
                      x_max=b.x_max, issuance_target=target, issuance_threshold=threshold,
                      anomalies=b.anomalies)


# --------------------------
# Fixed-cost issuance
# --------------------------

def issuance_gain(value: np.ndarray, grid: Grid, prop: np.ndarray, fixed: np.ndarray
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Best jump gain max_{t > i} V_t - (1 + lambda_p)(x_t - x_i) - lambda_f - V_i per node.

    Returns (gain, target row); the top row has no target (-inf, -1).
    """
    nx = grid.nx
    score = value - (1.0 + prop)[None, :] * grid.x[:, None]
    # suffix maximum over rows strictly above i, first row on ties
    best = np.full_like(value, -np.inf)
    arg = np.full(value.shape, -1, dtype=int)
    running = np.full(grid.nmu, -np.inf)
    running_arg = np.full(grid.nmu, -1, dtype=int)
    for i in range(nx - 2, -1, -1):
        better = score[i + 1] >= running
        running = np.where(better, score[i + 1], running)
        running_arg = np.where(better, i + 1, running_arg)
        best[i] = running
        arg[i] = running_arg
    gain = best - fixed[None, :] - (value - (1.0 + prop)[None, :] * grid.x[:, None])
    return gain, arg


def solve_fixed_issuance(model: ModelParams, grid: Grid, spec: IssuanceSpec, K: float | None = None,
                         tau: float = 0.0, max_iter: int = DEFAULT_MAX_ITER
                         ) -> tuple[ValueField, PolicyField, Boundaries, SolveReport]:
    """Nonlocal issuance: investors arrive at rate K and lift cash to the best node of the column."""
    K = default_K(grid) if K is None else float(K)
    prop, fixed = spec.costs_on(grid)
    if not np.any(fixed > 0):
        logger.warning("fixed issuance with zero fixed cost everywhere; the proportional variant applies")
    scheme = GeneratorScheme(model, grid)
    controls = {"ell": starting_rates(np.zeros(grid.shape), scheme, K),
                "target": np.full(grid.shape, -1, dtype=int)}

    def assemble_fn(c: Controls) -> DiscreteOperator:
        return scheme.assemble(c["ell"], jump_target=c["target"], jump_rate=K, issuance_cost=prop,
                               fixed_cost=fixed)

    def improve_fn(value: np.ndarray, c: Controls) -> tuple[Controls, int]:
        ell = improve_dividends(value, c["ell"], scheme, K)
        gain, arg = issuance_gain(value, grid, prop, fixed)
        old = c["target"]
        target = old.copy()
        target[gain < 0] = -1
        start = (gain > 0) & (old < 0)
        target[start] = arg[start]
        # an active node moves only to a strictly better target
        active = (gain > 0) & (old >= 0)
        ii, jj = np.nonzero(active)
        incumbent = value[old[ii, jj], jj] - (1.0 + prop[jj]) * grid.x[old[ii, jj]]
        challenger = value[arg[ii, jj], jj] - (1.0 + prop[jj]) * grid.x[arg[ii, jj]]
        move = challenger > incumbent
        target[ii[move], jj[move]] = arg[ii[move], jj[move]]
        target[~scheme.issuable] = -1
        switched = int(np.count_nonzero(ell != c["ell"]) + np.count_nonzero(target != old))
        return {"ell": ell, "target": target}, switched

    value, controls, report = run_policy_iteration(assemble_fn, improve_fn, controls, K=K, tau=tau,
                                                   max_iter=max_iter, label="fixed issuance")
    policy = PolicyField(ell=reported_rates(controls["ell"], scheme), K=K, target=controls["target"])
    boundaries = extract_boundaries(policy, grid, K)
    target_x = np.full(grid.nmu, np.nan)
    active = controls["target"] >= 0
    for j in np.flatnonzero(active.any(axis=0)):
        lowest = int(np.flatnonzero(active[:, j])[0])
        target_x[j] = grid.x[controls["target"][lowest, j]]
    columns = np.flatnonzero(active.any(axis=0))
    threshold = float(grid.mu[columns[0]]) if columns.size else None
    boundaries = _with_issuance(boundaries, target_x, threshold)
    logger.info("fixed issuance: %d intervention nodes", int(active.sum()))
    return value, policy, boundaries, report


# --------------------------
# Credit line
# --------------------------

def ruin_rows(grid: Grid, spec: CreditLineSpec) -> np.ndarray:
    """First row at or above x_lower(mu) in every column."""
    levels = spec.x_lower_at(grid.mu)
    below = levels < grid.x[0] - 1e-9 * grid.dx
    if np.any(below):
        j = int(np.flatnonzero(below)[0])
        raise MaskConsistencyError(f"credit_line.x_lower = {levels[j]:.6g} at mu = {grid.mu[j]:.6g} lies below "
                                   f"the grid bottom x = {grid.x[0]:.6g}")
    rows = np.ceil((levels - grid.x[0]) / grid.dx - 1e-9).astype(int)
    if np.any(rows >= grid.nx - 1):
        j = int(np.flatnonzero(rows >= grid.nx - 1)[0])
        raise MaskConsistencyError(f"credit_line.x_lower at mu = {grid.mu[j]:.6g} leaves no room below x_max")
    return rows


def solve_credit_line(model: ModelParams, grid: Grid, spec: CreditLineSpec, K: float | None = None,
                      tau: float = 0.0, max_iter: int = DEFAULT_MAX_ITER
                      ) -> tuple[ValueField, PolicyField, Boundaries, SolveReport]:
    """Base solve with drift mu + rho(x) x and ruin moved to x_lower(mu); rows below are masked."""
    rows = ruin_rows(grid, spec)
    X, MU = grid.mesh
    rate = np.where(X < 0, spec.rho_minus, 0.0)
    scheme = GeneratorScheme(model, grid, x_drift=MU + rate * X, ruin_index=rows)
    value, policy, report = policy_iteration(model, grid, K, tau, max_iter, scheme=scheme)
    policy = PolicyField(ell=np.where(scheme.masked, 0.0, policy.ell), K=policy.K)
    boundaries = extract_boundaries(policy, grid, policy.K, mask=scheme.masked)
    return value, policy, boundaries, report
