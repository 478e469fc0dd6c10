"""Penalized policy iteration for the dividend HJB variational inequality.

Each step solves the linear system of the current policy and then improves
the policy node by node. The penalized residual is affine in every control,
so the improvement only compares the end points of [0, K] and keeps the
incumbent on exact ties.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterator

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError
from .grid import Grid
from .model import ModelParams
from .operator import DiscreteOperator, GeneratorScheme

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 200
K_PER_INVERSE_DX = 100.0      # default K = 100 / dx
LINEAR_RTOL = 1e-10

Controls = dict[str, np.ndarray]
ValueField = np.ndarray


class HaltReason(str, enum.Enum):
    TOLERANCE = "TOLERANCE"
    POLICY_FIXED = "POLICY_FIXED"
    MAX_ITER = "MAX_ITER"


@dataclass(frozen=True, eq=False)
class PolicyField:
    """Per-node dividend rate ell in [0, K], plus issuance controls when present.

    ``iota`` is the proportional issuance rate; ``target`` is the post-issuance
    row index of a fixed-cost intervention (-1 where none).
    """

    ell: np.ndarray
    K: float
    iota: np.ndarray | None = None
    target: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not self.K > 0:
            raise ValueError(f"K must be positive, got {self.K}")
        ell = np.asarray(self.ell)
        if np.any(ell < 0) or np.any(ell > self.K):
            raise ValueError(f"dividend rates must lie in [0, K={self.K}]")

    @classmethod
    def zeros(cls, grid: Grid, K: float) -> "PolicyField":
        return cls(ell=np.zeros(grid.shape), K=K)

    def retain(self) -> np.ndarray:
        return self.ell < 0.5 * self.K


@dataclass
class SolveReport:
    iterations: int
    residual_history: list[float]
    halt_reason: HaltReason
    wall_time: float
    K: float
    linear_fallbacks: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.halt_reason is not HaltReason.MAX_ITER

    def to_dict(self) -> dict:
        out = asdict(self)
        out["halt_reason"] = self.halt_reason.value
        return out


def default_K(grid: Grid) -> float:
    return K_PER_INVERSE_DX / grid.dx


def default_gradient_c(model: ModelParams, grid: Grid) -> float:
    """C = 10 r x_max + max|mu|: the discount term plus the largest cash drift on the grid."""
    return 10.0 * model.r * grid.spec.x_max + float(np.max(np.abs(grid.mu)))


def gradient_tolerance(model: ModelParams, grid: Grid, K: float, C: float | None = None) -> float:
    """eps_K = C / K bounding the penalization error of the discrete V_x >= 1."""
    if C is None:
        C = default_gradient_c(model, grid)
    return C / K


# --------------------------
# Linear solves
# --------------------------

def backward_error(matrix: sp.spmatrix, x: np.ndarray, rhs: np.ndarray) -> float:
    norm_a = float(abs(matrix).sum(axis=1).max())
    scale = norm_a * float(np.max(np.abs(x))) + float(np.max(np.abs(rhs)))
    resid = float(np.max(np.abs(matrix @ x - rhs)))
    return resid / scale if scale > 0 else resid


class _LinearSolver:
    """Sparse LU with a preconditioned GMRES fallback."""

    def __init__(self) -> None:
        self.fallbacks = 0

    def __call__(self, matrix: sp.csr_matrix, rhs: np.ndarray) -> np.ndarray:
        A = matrix.tocsc()
        x = None
        try:
            x = spla.spsolve(A, rhs)
        except RuntimeError as exc:
            logger.debug("direct solve failed: %s", exc)
        if x is not None and np.all(np.isfinite(x)) and backward_error(matrix, x, rhs) <= LINEAR_RTOL:
            return x

        self.fallbacks += 1
        logger.debug("direct solve not accurate enough, falling back to GMRES with ILU")
        ilu = spla.spilu(A, drop_tol=1e-6, fill_factor=20)
        precond = spla.LinearOperator(A.shape, ilu.solve)
        x0 = x if x is not None and np.all(np.isfinite(x)) else None
        x, info = spla.gmres(A, rhs, x0=x0, rtol=LINEAR_RTOL, atol=0.0, restart=50, maxiter=500, M=precond)
        rel = float(np.linalg.norm(matrix @ x - rhs) / max(np.linalg.norm(rhs), 1e-300))
        if info != 0 and rel > LINEAR_RTOL and backward_error(matrix, x, rhs) > LINEAR_RTOL:
            raise SolverError(f"linear solve stalled: GMRES info={info}, relative residual {rel:.3e}")
        return x


def solve_linear(matrix: sp.csr_matrix, rhs: np.ndarray) -> np.ndarray:
    return _LinearSolver()(matrix, rhs)


# --------------------------
# Generic engine
# --------------------------

def run_policy_iteration(
    assemble_fn: Callable[[Controls], DiscreteOperator],
    improve_fn: Callable[[np.ndarray, Controls], tuple[Controls, int]],
    controls: Controls,
    *,
    K: float,
    tau: float = 0.0,
    max_iter: int = DEFAULT_MAX_ITER,
    label: str = "policy iteration",
) -> tuple[np.ndarray, Controls, SolveReport]:
    """Howard iteration: solve for the current controls, then improve them.

    Halts with TOLERANCE once sup|V_i - V_{i-1}| <= tau, with POLICY_FIXED when
    the improvement switches no node, and with MAX_ITER otherwise. The returned
    value always belongs to the returned controls.
    """
    if tau < 0:
        raise ValueError(f"solver.tau must be >= 0, got {tau}")
    if max_iter < 1:
        raise ValueError(f"solver.max_iter must be >= 1, got {max_iter}")

    linear = _LinearSolver()
    start = time.perf_counter()
    history: list[float] = []
    previous = None
    halt = HaltReason.MAX_ITER
    for iteration in range(1, max_iter + 1):
        op = assemble_fn(controls)
        value = linear(op.matrix, op.rhs).reshape(op.shape)
        change = float(np.max(np.abs(value if previous is None else value - previous)))
        history.append(change)
        if previous is not None and change <= tau:
            halt = HaltReason.TOLERANCE
            logger.info("%s: iteration %d, sup change %.3e", label, iteration, change)
            break
        improved, switched = improve_fn(value, controls)
        logger.info("%s: iteration %d, sup change %.3e, %d nodes switched", label, iteration, change, switched)
        if switched == 0:
            halt = HaltReason.POLICY_FIXED
            break
        if iteration == max_iter:
            break
        controls = improved
        previous = value
    wall = time.perf_counter() - start
    if halt is HaltReason.MAX_ITER:
        logger.warning("%s: no fixed point after %d iterations (last change %.3e)", label, max_iter, history[-1])
    else:
        logger.info("%s: halted with %s after %d iterations in %.2f s", label, halt.value, len(history), wall)
    report = SolveReport(iterations=len(history), residual_history=history, halt_reason=halt,
                         wall_time=wall, K=K, linear_fallbacks=linear.fallbacks)
    return value, controls, report


# --------------------------
# Base problem
# --------------------------

def backward_gradient(value: np.ndarray, dx: float) -> np.ndarray:
    """D-V at every row; the lowest row differences against a zero ruin value."""
    grad = np.empty_like(value)
    grad[1:] = (value[1:] - value[:-1]) / dx
    grad[0] = value[0] / dx
    return grad


def improve_dividends(value: np.ndarray, ell: np.ndarray, scheme: GeneratorScheme, K: float) -> np.ndarray:
    grad = backward_gradient(value, scheme.grid.dx)
    new = ell.copy()
    new[grad < 1.0] = K
    new[grad > 1.0] = 0.0
    new[scheme.payment] = K
    new[scheme.fixed] = 0.0
    return new


def starting_rates(ell: np.ndarray, scheme: GeneratorScheme, K: float) -> np.ndarray:
    """Top-edge rows always pay at rate K; ruin rows carry no control."""
    ell = np.array(ell, dtype=float)
    ell[scheme.payment] = K
    ell[scheme.fixed] = 0.0
    return ell


def reported_rates(ell: np.ndarray, scheme: GeneratorScheme) -> np.ndarray:
    """Ruin rows report the control of the node directly above them."""
    out = ell.copy()
    i, j = np.nonzero(scheme.dirichlet)
    out[i, j] = ell[np.minimum(i + 1, ell.shape[0] - 1), j]
    return out


def policy_iteration(
    model: ModelParams,
    grid: Grid,
    K: float | None = None,
    tau: float = 0.0,
    max_iter: int = DEFAULT_MAX_ITER,
    initial_policy: PolicyField | None = None,
    *,
    scheme: GeneratorScheme | None = None,
) -> tuple[ValueField, PolicyField, SolveReport]:
    """Solve the penalized dividend problem on ``grid``.

    Starts from ``initial_policy`` or ell = 0. ``scheme`` lets callers supply
    a generator with a modified drift or ruin boundary.
    """
    K = default_K(grid) if K is None else float(K)
    scheme = scheme or GeneratorScheme(model, grid)
    ell0 = np.zeros(grid.shape) if initial_policy is None else initial_policy.ell
    controls = {"ell": starting_rates(ell0, scheme, K)}

    def assemble_fn(c: Controls) -> DiscreteOperator:
        return scheme.assemble(c["ell"])

    def improve_fn(value: np.ndarray, c: Controls) -> tuple[Controls, int]:
        new = improve_dividends(value, c["ell"], scheme, K)
        return {"ell": new}, int(np.count_nonzero(new != c["ell"]))

    value, controls, report = run_policy_iteration(assemble_fn, improve_fn, controls, K=K, tau=tau,
                                                   max_iter=max_iter)
    value = np.where(scheme.fixed, 0.0, value)
    policy = PolicyField(ell=reported_rates(controls["ell"], scheme), K=K)
    return value, policy, report


def continuation_runs(model: ModelParams, grid: Grid, K_schedule: list[float], tau: float = 0.0,
                      max_iter: int = DEFAULT_MAX_ITER, *, scheme: GeneratorScheme | None = None
                      ) -> Iterator[tuple[float, ValueField, PolicyField, SolveReport]]:
    """Solve for each K of an increasing schedule, warm-starting from the previous policy."""
    schedule = [float(k) for k in K_schedule]
    if not schedule:
        raise ValueError("solver.k_schedule must not be empty")
    if any(k <= 0 for k in schedule) or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError(f"solver.k_schedule must be positive and strictly increasing, got {schedule}")
    scheme = scheme or GeneratorScheme(model, grid)
    policy = None
    for K in schedule:
        if policy is not None:
            policy = PolicyField(ell=policy.ell * (K / policy.K), K=K)
        value, policy, report = policy_iteration(model, grid, K, tau, max_iter, policy, scheme=scheme)
        logger.info("K = %g: %s after %d iterations", K, report.halt_reason.value, report.iterations)
        yield K, value, policy, report


def k_continuation(model: ModelParams, grid: Grid, K_schedule: list[float], tau: float = 0.0,
                   max_iter: int = DEFAULT_MAX_ITER) -> list[tuple[float, ValueField]]:
    return [(K, value) for K, value, _, _ in continuation_runs(model, grid, K_schedule, tau, max_iter)]
