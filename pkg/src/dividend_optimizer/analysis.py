"""Free-boundary extraction and regime classification from a converged policy."""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import NonContiguousRetainRegion, OutOfBoxError, TruncationWarning
from .grid import Grid
from .model import ModelParams
from .operator import GeneratorScheme, monotone_rows
from .solver import PolicyField, default_gradient_c, gradient_tolerance

logger = logging.getLogger(__name__)


class Regime(str, enum.Enum):
    RETAIN = "RETAIN"
    PAY_EXCESS = "PAY_EXCESS"
    LIQUIDATE = "LIQUIDATE"


@dataclass(frozen=True, eq=False)
class Boundaries:
    """Per-column curves; NaN marks an ABSENT value."""

    mu: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    mu_star: float | None
    x_min: float
    x_max: float
    issuance_target: np.ndarray | None = None
    issuance_threshold: float | None = None
    anomalies: tuple[float, ...] = ()

    def column(self, mu: float) -> int:
        dmu = self.mu[1] - self.mu[0]
        return int(np.clip(np.rint((mu - self.mu[0]) / dmu), 0, self.mu.size - 1))

    def barrier_height(self, mu: float) -> float:
        """x-bar at the column nearest to ``mu`` (NaN if ABSENT)."""
        return float(self.upper[self.column(mu)])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"mu": self.mu, "divLower": self.lower, "divUpper": self.upper})
        if self.issuance_target is not None:
            frame["issuanceTarget"] = self.issuance_target
        return frame


def _refine_level_set(column: np.ndarray, x: np.ndarray, node: int, falling: bool) -> float:
    """Linear interpolation of the discrete V_x = 1 crossing next to ``node``."""
    dx = x[1] - x[0]
    grad = np.diff(column) / dx
    mid = x[:-1] + 0.5 * dx
    for i in range(max(node - 1, 0), min(node + 1, grad.size - 1)):
        a, b = grad[i] - 1.0, grad[i + 1] - 1.0
        crossing = (a > 0 >= b) if falling else (a <= 0 < b)
        if crossing:
            return float(mid[i] + a / (a - b) * dx)
    return float(x[node])


def extract_boundaries(policy: PolicyField, grid: Grid, K: float | None = None, *,
                       value: np.ndarray | None = None, mask: np.ndarray | None = None) -> Boundaries:
    """Retain region per column is {ell < K/2}; its extreme nodes give x-lower and x-bar.

    ``mask`` excludes ruined nodes (credit line). With ``value`` the curves are
    refined to the interpolated V_x = 1 crossing.
    """
    K = policy.K if K is None else K
    retain = np.asarray(policy.ell) < 0.5 * K
    if mask is not None:
        retain &= ~mask
    x, mu = grid.x, grid.mu
    lower = np.full(grid.nmu, np.nan)
    upper = np.full(grid.nmu, np.nan)
    gaps = []
    for j in range(grid.nmu):
        nodes = np.flatnonzero(retain[:, j])
        if nodes.size == 0:
            continue
        lo, hi = int(nodes[0]), int(nodes[-1])
        if hi - lo + 1 != nodes.size:
            gaps.append(float(mu[j]))
        lower[j], upper[j] = x[lo], x[hi]
        if value is not None:
            if hi < grid.nx - 1:
                upper[j] = _refine_level_set(value[:, j], x, hi, falling=True)
            if lo > 0 and not (mask is not None and mask[lo - 1, j]):
                lower[j] = _refine_level_set(value[:, j], x, lo - 1, falling=False)
    if gaps:
        warnings.warn(f"retain region has gaps in {len(gaps)} columns, first at mu = {gaps[0]:.6g}",
                      NonContiguousRetainRegion, stacklevel=2)

    full_payout = np.isnan(upper)
    mu_star = None
    block = 0
    if full_payout[0]:
        block = int(np.argmin(full_payout)) if not full_payout.all() else grid.nmu
        mu_star = float(mu[block - 1])
    anomalies = tuple(float(m) for m in mu[block:][full_payout[block:]])
    if anomalies:
        logger.warning("%d full-payout columns detached from mu_min, first at mu = %.6g",
                       len(anomalies), anomalies[0])

    touching = np.flatnonzero(upper >= x[-2])
    if touching.size:
        warnings.warn(f"dividend boundary reaches the top of the grid in {touching.size} columns "
                      f"(first at mu = {mu[touching[0]]:.6g}); increase grid.x_max", TruncationWarning,
                      stacklevel=2)
    return Boundaries(mu=mu.copy(), lower=lower, upper=upper, mu_star=mu_star,
                      x_min=float(x[0]), x_max=float(x[-1]), anomalies=anomalies)


def classify_point(boundaries: Boundaries, x: float, mu: float) -> Regime:
    """RETAIN on [x-lower, x-bar] (both ends included), PAY_EXCESS above, LIQUIDATE below or for mu <= mu_star."""
    if not (boundaries.x_min <= x <= boundaries.x_max and boundaries.mu[0] <= mu <= boundaries.mu[-1]):
        raise OutOfBoxError(f"point (x={x}, mu={mu}) lies outside the grid box "
                            f"[{boundaries.x_min}, {boundaries.x_max}] x [{boundaries.mu[0]}, {boundaries.mu[-1]}]")
    if boundaries.mu_star is not None and mu <= boundaries.mu_star:
        return Regime.LIQUIDATE
    j = boundaries.column(mu)
    lower, upper = boundaries.lower[j], boundaries.upper[j]
    if np.isnan(upper) or x < lower:
        return Regime.LIQUIDATE
    if x > upper:
        return Regime.PAY_EXCESS
    return Regime.RETAIN


# --------------------------
# Invariant checks on a converged base solve
# --------------------------

VALUE_TOL = 1e-8
INVARIANT_COLUMNS = ["check", "passed", "worst", "tolerance", "note"]


def invariant_report(model: ModelParams, grid: Grid, value: np.ndarray, policy: PolicyField, *,
                     auxiliary=None, gradient_c: float | None = None,
                     scheme: GeneratorScheme | None = None) -> pd.DataFrame:
    """Check sign, monotonicity, gradient and bound properties node-wise.

    Every row carries the tolerance it was checked with and a note naming the
    exact form of the check. The gradient check uses eps_K = C / K with C from
    ``gradient_c`` (config ``solver.gradient_c``), defaulting to
    10 r x_max + max|mu|. The liquidation lower bound integrates that slack
    along x, V >= x - x_max eps_K; the pointwise V >= x - eps_K form does not
    follow from a discrete gradient bound and is reported in the note only.

    ``auxiliary`` is a real-option solution on ``grid.mu`` enabling the upper
    bound x + V_a(mu).
    """
    C = default_gradient_c(model, grid) if gradient_c is None else float(gradient_c)
    eps = gradient_tolerance(model, grid, policy.K, C)
    X, _ = grid.mesh
    rows = []

    def add(name: str, slack: np.ndarray, tolerance: float, note: str) -> None:
        worst = float(np.min(slack)) if slack.size else 0.0
        rows.append({"check": name, "passed": worst >= 0.0, "worst": worst, "tolerance": tolerance, "note": note})

    add("nonnegative", value + VALUE_TOL, VALUE_TOL, "V >= 0")
    add("zero_at_ruin", VALUE_TOL - np.abs(value[0]), VALUE_TOL, "V(0, mu) = 0")
    add("nondecreasing_in_x", np.diff(value, axis=0) + VALUE_TOL, VALUE_TOL, "V(x+dx, mu) >= V(x, mu)")
    add("nondecreasing_in_mu", np.diff(value, axis=1) + VALUE_TOL, VALUE_TOL, "V(x, mu+dmu) >= V(x, mu)")
    add("gradient_at_least_one", np.diff(value, axis=0) / grid.dx - (1.0 - eps), eps,
        f"forward V_x >= 1 - eps_K, eps_K = C/K, C = {C:.6g}, K = {policy.K:.6g}")
    pointwise = float(np.min(value - (X - eps)))
    add("liquidation_lower_bound", value - (X - grid.spec.x_max * eps), grid.spec.x_max * eps,
        f"V >= x - x_max*eps_K (integrated gradient slack); pointwise V >= x - eps_K worst {pointwise:.6g}")
    if auxiliary is not None:
        delta = max(0.0, -auxiliary.raw_min) + VALUE_TOL
        add("real_option_upper_bound", X + auxiliary.values[None, :] + delta - value, delta,
            "V <= x + V_a(mu) + delta, delta = penalization undershoot of V_a")
    scheme = scheme or GeneratorScheme(model, grid)
    rows_ok = monotone_rows(scheme.assemble(policy.ell), model.r)
    rows.append({"check": "monotone_rows", "passed": bool(rows_ok.all()), "worst": float(rows_ok.mean()),
                 "tolerance": 0.0, "note": "share of rows with off-diagonals <= 0 and diagonal >= r + sum |off-diagonal|"})
    report = pd.DataFrame(rows, columns=INVARIANT_COLUMNS)
    failed = report.loc[~report["passed"], "check"].tolist()
    if failed:
        logger.warning("invariant checks failed: %s", ", ".join(failed))
    return report
