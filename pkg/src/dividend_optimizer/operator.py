"""Monotone upwind discretization of the penalized dividend HJB operator.

For a control field ell the row at node (i, j) discretizes

    r V - L V + ell (V_x - 1)

where L V = mu V_x + kappa V_mu + sigma^2/2 V_xx + rho sigma sigma_tilde V_xmu
+ sigma_tilde^2/2 V_mumu. Rows are written as transition rates q >= 0 to
neighbouring nodes, so the assembled matrix A has diagonal r + sum(q) and
off-diagonals -q, and A V = b is the linear system for the fixed policy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import scipy.sparse as sp

from .errors import MonotonicityViolation
from .grid import Grid
from .model import ModelParams, kappa, sigma_tilde

if TYPE_CHECKING:
    from .solver import PolicyField

logger = logging.getLogger(__name__)

_RATE_TOL = 1e-12

# neighbour offsets (di, dj)
_DIRECTIONS = {
    "x_up": (1, 0),
    "x_down": (-1, 0),
    "mu_up": (0, 1),
    "mu_down": (0, -1),
    "diag_pp": (1, 1),
    "diag_mm": (-1, -1),
    "diag_pm": (1, -1),
    "diag_mp": (-1, 1),
}


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """A V = b for one fixed control field; ``rhs`` carries the payoff terms."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    shape: tuple[int, int]

    def apply(self, value: np.ndarray) -> np.ndarray:
        return (self.matrix @ np.ravel(value)).reshape(self.shape)

    def residual(self, value: np.ndarray) -> np.ndarray:
        return self.apply(value) - self.rhs.reshape(self.shape)

    def row(self, k: int) -> dict[int, float]:
        start, stop = self.matrix.indptr[k], self.matrix.indptr[k + 1]
        return dict(zip(self.matrix.indices[start:stop].tolist(), self.matrix.data[start:stop].tolist()))


def mu_rates(model: ModelParams, mu: np.ndarray, dmu: float) -> tuple[np.ndarray, np.ndarray]:
    """Upwind transition rates along mu with zero flux through the end nodes.

    Shared by the 2-D generator and the 1-D real-option problem so both see
    the same mu stencil.
    """
    k = kappa(model, mu)
    diffusion = 0.5 * sigma_tilde(model, mu) ** 2 / dmu**2
    up = diffusion + np.maximum(k, 0.0) / dmu
    down = diffusion + np.maximum(-k, 0.0) / dmu
    up[-1] = 0.0
    down[0] = 0.0
    return up, down


def _shifted(weights: np.ndarray, offset: int, size: int) -> sp.spmatrix:
    """Sparse matrix with weights[k] at (k, k + offset), dropping entries off the grid."""
    if offset > 0:
        return sp.diags(weights.ravel()[: size - offset], offset, shape=(size, size), format="csr")
    return sp.diags(weights.ravel()[-offset:], offset, shape=(size, size), format="csr")


class GeneratorScheme:
    """Control-independent part of the discrete generator for one (model, grid).

    Row classes per node:
      * masked rows below a credit-line ruin node (identity, value 0)
      * Dirichlet ruin rows, V = 0 (row ``ruin_index[j]`` of each column)
      * payment rows on the top x edge, only the dividend transition
      * live rows, the full stencil

    ``x_drift`` overrides the cash drift mu (credit line).
    """

    def __init__(self, model: ModelParams, grid: Grid, *, x_drift: np.ndarray | None = None,
                 ruin_index: np.ndarray | None = None) -> None:
        self.model = model
        self.grid = grid
        nx, nmu = grid.shape
        dx, dmu = grid.dx, grid.dmu
        rows = np.arange(nx)[:, None]

        if ruin_index is None:
            ruin_index = np.zeros(nmu, dtype=int)
        self.ruin_index = np.asarray(ruin_index, dtype=int)
        self.masked = rows < self.ruin_index[None, :]
        self.dirichlet = rows == self.ruin_index[None, :]
        self.payment = np.zeros(grid.shape, dtype=bool)
        self.payment[-1, :] = True
        self.live = ~(self.masked | self.dirichlet | self.payment)
        self.fixed = self.masked | self.dirichlet
        self.issuable = self.live | self.dirichlet

        X, MU = grid.mesh
        drift = MU if x_drift is None else np.asarray(x_drift, dtype=float)
        vol = sigma_tilde(model, grid.mu)
        cross = model.rho * model.sigma * vol                      # per column
        diffusion_x = 0.5 * model.sigma**2 / dx**2
        mu_up, mu_down = mu_rates(model, grid.mu, dmu)
        diffusion_mu = 0.5 * vol**2 / dmu**2

        cross_rows = self.live.copy()
        cross_rows[0, :] = False
        cross_rows[:, 0] = False
        cross_rows[:, -1] = False
        adj = np.where(cross_rows, np.abs(cross)[None, :] / (2.0 * dx * dmu), 0.0)
        self._check_monotone(adj, diffusion_x, diffusion_mu, cross)

        rates = {
            "x_up": diffusion_x + np.maximum(drift, 0.0) / dx - adj,
            "x_down": diffusion_x + np.maximum(-drift, 0.0) / dx - adj,
            "mu_up": np.broadcast_to(mu_up, grid.shape) - adj,
            "mu_down": np.broadcast_to(mu_down, grid.shape) - adj,
            "diag_pp": np.where(cross_rows, np.maximum(cross, 0.0)[None, :] / (2.0 * dx * dmu), 0.0),
            "diag_pm": np.where(cross_rows, np.maximum(-cross, 0.0)[None, :] / (2.0 * dx * dmu), 0.0),
        }
        rates["diag_mm"] = rates["diag_pp"]
        rates["diag_mp"] = rates["diag_pm"]
        size = grid.size
        parts = []
        outrate = np.zeros(grid.shape)
        for name, (di, dj) in _DIRECTIONS.items():
            q = np.where(self.live, np.maximum(rates[name], 0.0), 0.0)
            outrate += q
            parts.append(_shifted(q, di * nmu + dj, size))
        self.rates = rates
        self.outrate = outrate
        self.generator = sum(parts[1:], parts[0]).tocsr()
        logger.debug("generator assembled: %d nodes, %d live rows, %d nonzeros",
                     size, int(self.live.sum()), self.generator.nnz)

    def _check_monotone(self, adj: np.ndarray, diffusion_x: float, diffusion_mu: np.ndarray,
                        cross: np.ndarray) -> None:
        limit = np.minimum(diffusion_x, diffusion_mu[None, :]) * (1.0 + _RATE_TOL)
        bad = adj > limit
        if np.any(bad):
            i, j = (int(v) for v in np.argwhere(bad)[0])
            vol = float(sigma_tilde(self.model, self.grid.mu[j]))
            raise MonotonicityViolation((i, j), float(cross[j]), self.grid.dx, self.grid.dmu,
                                        self.model.sigma, vol)

    def assemble(self, ell: np.ndarray, *, iota: np.ndarray | None = None,
                 issuance_cost: np.ndarray | None = None, jump_target: np.ndarray | None = None,
                 jump_rate: float = 0.0, fixed_cost: np.ndarray | None = None) -> DiscreteOperator:
        """Add the control transitions to the static generator.

        ``ell`` pays dividends at rate ell (drift -ell, payoff +ell). ``iota``
        issues equity at rate iota with payoff -(1 + issuance_cost) * iota.
        ``jump_target`` (row index, -1 for none) jumps to that row of the same
        column at ``jump_rate`` with payoff -((1 + issuance_cost) * jump + fixed_cost).
        Issuance is also open to ruin rows, whose identity row then becomes
        min{V, issuance residual} in penalized form.
        """
        grid = self.grid
        nmu = grid.nmu
        size, dx = grid.size, grid.dx
        paying = np.where(self.fixed, 0.0, ell)
        diag = np.where(self.fixed, 1.0, self.model.r + self.outrate) + paying / dx
        rhs = paying.copy()
        offdiag = self.generator + _shifted(paying / dx, -nmu, size)

        if iota is not None:
            cost = np.broadcast_to(issuance_cost if issuance_cost is not None else 0.0, (nmu,))
            issuing = np.where(self.issuable, iota, 0.0)
            diag = diag + issuing / dx
            rhs = rhs - (1.0 + cost)[None, :] * issuing
            offdiag = offdiag + _shifted(issuing / dx, nmu, size)

        if jump_target is not None:
            cost = np.broadcast_to(issuance_cost if issuance_cost is not None else 0.0, (nmu,))
            fixed_cost = np.broadcast_to(fixed_cost if fixed_cost is not None else 0.0, (nmu,))
            active = (jump_target >= 0) & self.issuable
            src_i, src_j = np.nonzero(active)
            dst_i = jump_target[active]
            diag = diag + np.where(active, jump_rate, 0.0)
            jump = (1.0 + cost[src_j]) * (grid.x[dst_i] - grid.x[src_i]) + fixed_cost[src_j]
            rhs = rhs.copy()
            rhs[src_i, src_j] -= jump_rate * jump
            offdiag = offdiag + sp.csr_matrix(
                (np.full(src_i.size, jump_rate), (src_i * nmu + src_j, dst_i * nmu + src_j)),
                shape=(size, size),
            )

        matrix = (sp.diags(diag.ravel(), 0, shape=(size, size), format="csr") - offdiag).tocsr()
        return DiscreteOperator(matrix=matrix, rhs=rhs.ravel(), shape=grid.shape)


def assemble(model: ModelParams, grid: Grid, policy: "PolicyField", K: float) -> DiscreteOperator:
    """Operator of the base problem for a dividend policy with rates in [0, K]."""
    ell = np.asarray(policy.ell, dtype=float)
    if ell.shape != grid.shape:
        raise ValueError(f"policy shape {ell.shape} does not match grid shape {grid.shape}")
    if np.any(ell < 0) or np.any(ell > K):
        bad = tuple(int(v) for v in np.argwhere((ell < 0) | (ell > K))[0])
        raise ValueError(f"policy rate outside [0, K={K}] at node (i, j) = {bad}")
    return GeneratorScheme(model, grid).assemble(ell)


def monotone_rows(op: DiscreteOperator, r: float, tol: float = 1e-9) -> np.ndarray:
    """Per-row check: off-diagonals <= 0 and diagonal >= r + sum |off-diagonal|.

    Identity rows (Dirichlet and masked nodes) count as monotone.
    """
    A = op.matrix.tocoo()
    off = A.row != A.col
    negative_ok = np.ones(A.shape[0], dtype=bool)
    np.logical_and.at(negative_ok, A.row[off], A.data[off] <= tol)
    off_sum = np.bincount(A.row[off], weights=np.abs(A.data[off]), minlength=A.shape[0])
    diag = op.matrix.diagonal()
    identity = (off_sum == 0) & (diag == 1.0)
    dominant = diag >= r + off_sum - tol * np.maximum(1.0, diag)
    return negative_ok & (dominant | identity)
