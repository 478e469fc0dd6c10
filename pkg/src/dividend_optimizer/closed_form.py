"""Closed-form deterministic solution and the 1-D real-option problem.

With sigma = sigma_tilde = 0 and kappa(mu) = k (mu_bar - mu) the firm survives
from (x, mu < 0) only if x >= x_b(mu); it then waits tau0(mu) until mu = 0
and collects V(0, 0) = mu_bar/r - mu_bar/(r + k).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
import pulp
import scipy.sparse as sp
from scipy.optimize import bisect

from .errors import BracketNotFound, DomainError, ModelError, TruncationWarning
from .model import ModelParams
from .operator import DiscreteOperator, mu_rates
from .solver import SolveReport, run_policy_iteration

logger = logging.getLogger(__name__)

BISECT_XTOL = 1e-10
BRACKET_LIMIT = -1e6


@dataclass(frozen=True)
class DeterministicParams:
    r: float
    k: float
    mu_bar: float

    def __post_init__(self) -> None:
        for name in ("r", "k", "mu_bar"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ModelError(f"deterministic.{name} must be positive, got {value}")

    @property
    def value_at_origin(self) -> float:
        """V(0, 0): pay every incoming earning from mu = 0 onwards."""
        return self.mu_bar / self.r - self.mu_bar / (self.r + self.k)


def tau0(p: DeterministicParams, mu):
    """Time for mu to reach 0 from mu <= 0."""
    arr = np.asarray(mu, dtype=float)
    if np.any(arr > 0):
        raise DomainError(f"tau0 needs mu <= 0, got {arr[arr > 0].flat[0]!r}")
    out = np.log((p.mu_bar - arr) / p.mu_bar) / p.k
    return float(out) if np.ndim(mu) == 0 else out


def x_b(p: DeterministicParams, mu):
    """Cash needed to survive until mu reaches 0 (zero for mu >= 0)."""
    arr = np.asarray(mu, dtype=float)
    neg = np.minimum(arr, 0.0)
    out = np.where(arr < 0, -p.mu_bar * tau0(p, neg) - neg / p.k, 0.0)
    return float(out) if np.ndim(mu) == 0 else out


def _waiting_value(p: DeterministicParams, mu):
    return np.exp(-p.r * tau0(p, mu)) * p.value_at_origin


def deterministic_value(p: DeterministicParams, x, mu):
    x_arr = np.asarray(x, dtype=float)
    mu_arr = np.asarray(mu, dtype=float)
    if np.any(x_arr < 0):
        raise DomainError("deterministic_value needs x >= 0")
    x_arr, mu_arr = np.broadcast_arrays(x_arr, mu_arr)
    neg = np.minimum(mu_arr, 0.0)
    barrier = x_b(p, neg)
    survive = x_arr + np.maximum(0.0, _waiting_value(p, neg) - barrier)
    positive = x_arr + p.mu_bar / p.r + (mu_arr - p.mu_bar) / (p.r + p.k)
    out = np.where(mu_arr >= 0, positive, np.where(x_arr < barrier, x_arr, survive))
    return float(out) if out.ndim == 0 else out


def deterministic_mu_star(p: DeterministicParams) -> float:
    """Root of x_b(mu) - exp(-r tau0(mu)) V(0, 0) on mu < 0."""

    def g(mu: float) -> float:
        return x_b(p, mu) - _waiting_value(p, mu)

    hi = -1e-12
    lo = -1.0
    while g(lo) <= 0:
        lo *= 2.0
        if lo < BRACKET_LIMIT:
            raise BracketNotFound(f"no sign change of the liquidation condition on [{BRACKET_LIMIT:g}, 0)")
    return float(bisect(g, lo, hi, xtol=BISECT_XTOL))


def deterministic_boundary_table(p: DeterministicParams, mu_min: float, mu_max: float = 0.0,
                                 n: int = 201) -> pd.DataFrame:
    """Survival cash x_b and discounted waiting value on a mu range below 0."""
    if mu_max > 0:
        raise DomainError(f"deterministic.mu_max must be <= 0, got {mu_max}")
    if not mu_min < mu_max:
        raise DomainError(f"deterministic.mu_min must be below mu_max, got [{mu_min}, {mu_max}]")
    mu = np.linspace(mu_min, mu_max, n)
    return pd.DataFrame({"mu": mu, "xb": x_b(p, mu), "waitingValue": _waiting_value(p, mu)})


# --------------------------
# Real-option problem
# --------------------------

@dataclass(frozen=True, eq=False)
class AuxiliarySolution:
    mu: np.ndarray
    values: np.ndarray
    mu_star: float | None
    raw_min: float = 0.0
    report: SolveReport | None = None

    def __call__(self, mu) -> np.ndarray:
        return np.interp(mu, self.mu, self.values)


def _uniform_step(mu_nodes: np.ndarray) -> float:
    if mu_nodes.ndim != 1 or mu_nodes.size < 3:
        raise ValueError("the real-option grid needs at least 3 mu nodes")
    steps = np.diff(mu_nodes)
    if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise ValueError("the real-option grid must be uniform and increasing")
    return float(steps[0])


def _auxiliary_matrix(model: ModelParams, mu: np.ndarray, dmu: float) -> sp.csr_matrix:
    up, down = mu_rates(model, mu, dmu)
    n = mu.size
    diag = model.r + up + down
    return sp.diags([diag, -up[:-1], -down[1:]], [0, 1, -1], shape=(n, n), format="csr")


def solve_auxiliary(model: ModelParams, mu_nodes, K: float | None = None, tau: float = 0.0,
                    max_iter: int = 200) -> AuxiliarySolution:
    """Value of the cash flow without a buffer: min{r V - L V - mu, V} = 0 on the nodes.

    Stopping is penalized at rate s in {0, K}; stop where the continuation
    value is negative.
    """
    mu = np.asarray(mu_nodes, dtype=float)
    dmu = _uniform_step(mu)
    K = 100.0 / dmu if K is None else float(K)
    base = _auxiliary_matrix(model, mu, dmu)

    def assemble_fn(c):
        matrix = (base + sp.diags(c["stop"], 0, format="csr")).tocsr()
        return DiscreteOperator(matrix=matrix, rhs=mu.copy(), shape=(mu.size,))

    def improve_fn(value, c):
        new = c["stop"].copy()
        new[value < 0] = K
        new[value > 0] = 0.0
        return {"stop": new}, int(np.count_nonzero(new != c["stop"]))

    raw, controls, report = run_policy_iteration(assemble_fn, improve_fn, {"stop": np.zeros(mu.size)},
                                                 K=K, tau=tau, max_iter=max_iter, label="real option")
    stopping = controls["stop"] >= 0.5 * K
    mu_star = None
    if stopping[0]:
        block_end = int(np.argmin(stopping)) - 1 if not stopping.all() else mu.size - 1
        mu_star = float(mu[block_end])
    else:
        warnings.warn(f"no stopping region above mu_min = {mu[0]:g}: the liquidation threshold "
                      "lies outside the grid", TruncationWarning, stacklevel=2)
    values = np.maximum(raw, 0.0)
    logger.info("real option: mu_star = %s", "ABSENT" if mu_star is None else f"{mu_star:.6g}")
    return AuxiliarySolution(mu=mu, values=values, mu_star=mu_star, raw_min=float(raw.min()), report=report)


def auxiliary_lp(model: ModelParams, mu_nodes) -> np.ndarray:
    """Exact discrete obstacle problem as a linear program.

    The least V >= 0 with (A V)_j >= mu_j solves min{A V - mu, V} = 0 for the
    M-matrix A, so minimizing sum(V) over that set recovers it.
    """
    mu = np.asarray(mu_nodes, dtype=float)
    dmu = _uniform_step(mu)
    A = _auxiliary_matrix(model, mu, dmu)
    nodes = range(mu.size)

    # --------------------------
    # 1. Define the model
    # --------------------------
    lp = pulp.LpProblem("Real_Option_Obstacle", pulp.LpMinimize)
    V = pulp.LpVariable.dicts("V", nodes, lowBound=0, cat="Continuous")
    lp += pulp.lpSum(V[j] for j in nodes), "Total_Value"

    # --------------------------
    # 2. Supersolution constraints
    # --------------------------
    for j in nodes:
        start, stop = A.indptr[j], A.indptr[j + 1]
        lp += (pulp.lpSum(float(coef) * V[int(col)] for col, coef in zip(A.indices[start:stop], A.data[start:stop]))
               >= float(mu[j])), f"Generator_{j}"

    # --------------------------
    # 3. Solve
    # --------------------------
    lp.solve(pulp.PULP_CBC_CMD(msg=False))
    status = pulp.LpStatus[lp.status]
    logger.info("real-option LP status: %s, objective %.6g", status, pulp.value(lp.objective))
    if status != "Optimal":
        raise ModelError(f"real-option LP did not solve: status {status}")
    return np.array([V[j].varValue for j in nodes], dtype=float)
