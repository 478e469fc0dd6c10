"""Truncated rectangular (x, mu) grid with node indexing and boundary tags.

Node (i, j) sits at x_i = x_min + i*dx, mu_j = mu_min + j*dmu and has flat
index k = i*nmu + j. Fields on the grid are arrays of shape (nx, nmu).
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridError
from .model import CIR, ModelParams, OrnsteinUhlenbeck, sigma_tilde

logger = logging.getLogger(__name__)

# Default truncation
DEFAULT_X_MAX = 5.0          # cash
DEFAULT_NODES = 301
STATIONARY_WIDTH = 6.0       # stationary standard deviations either side of mu_bar
MIN_MU_HALF_RANGE = 2.0


class NodeTag(enum.IntEnum):
    INTERIOR = 0
    X_ZERO = 1
    X_MAX = 2
    MU_MIN = 3
    MU_MAX = 4
    CORNER = 5


@dataclass(frozen=True)
class GridSpec:
    x_max: float
    mu_min: float
    mu_max: float
    nx: int
    nmu: int
    x_min: float = 0.0
    one_sided_at_boundary: bool = False

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dmu(self) -> float:
        return (self.mu_max - self.mu_min) / (self.nmu - 1)

    @classmethod
    def default_for(cls, model: ModelParams, nx: int = DEFAULT_NODES, nmu: int = DEFAULT_NODES,
                    x_max: float = DEFAULT_X_MAX) -> "GridSpec":
        drift = model.drift
        if isinstance(drift, OrnsteinUhlenbeck):
            half = STATIONARY_WIDTH * drift.sigma_tilde / math.sqrt(2.0 * drift.k)
            mu_min = min(drift.mu_bar - half, -MIN_MU_HALF_RANGE)
            mu_max = max(drift.mu_bar + half, MIN_MU_HALF_RANGE)
            return cls(x_max=x_max, mu_min=mu_min, mu_max=mu_max, nx=nx, nmu=nmu)
        if isinstance(drift, CIR):
            spread = drift.sigma_tilde * math.sqrt(max(drift.mu_bar - drift.a, 0.0) / (2.0 * drift.k))
            mu_max = max(drift.mu_bar + STATIONARY_WIDTH * spread, MIN_MU_HALF_RANGE)
            # start one step above a, where sigma_tilde vanishes
            step = (mu_max - drift.a) / nmu
            return cls(x_max=x_max, mu_min=drift.a + step, mu_max=mu_max, nx=nx, nmu=nmu)
        raise GridError("custom drifts need an explicit grid section (grid.mu_min, grid.mu_max)")

    def refined(self, factor: int = 2) -> "GridSpec":
        """Nested refinement: every coarse node is also a fine node."""
        return GridSpec(self.x_max, self.mu_min, self.mu_max,
                        factor * (self.nx - 1) + 1, factor * (self.nmu - 1) + 1,
                        self.x_min, self.one_sided_at_boundary)


@dataclass(frozen=True, eq=False)
class Grid:
    spec: GridSpec
    x: np.ndarray
    mu: np.ndarray
    tags: np.ndarray

    @property
    def nx(self) -> int:
        return self.spec.nx

    @property
    def nmu(self) -> int:
        return self.spec.nmu

    @property
    def shape(self) -> tuple[int, int]:
        return (self.spec.nx, self.spec.nmu)

    @property
    def size(self) -> int:
        return self.spec.nx * self.spec.nmu

    @property
    def dx(self) -> float:
        return self.spec.dx

    @property
    def dmu(self) -> float:
        return self.spec.dmu

    def index(self, i: int, j: int) -> int:
        return i * self.spec.nmu + j

    def unravel(self, k: int) -> tuple[int, int]:
        return divmod(k, self.spec.nmu)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, MU) coordinate arrays of shape (nx, nmu)."""
        return np.meshgrid(self.x, self.mu, indexing="ij")

    def tag_counts(self) -> dict[NodeTag, int]:
        counts = np.bincount(self.tags.ravel(), minlength=len(NodeTag))
        return {tag: int(counts[tag]) for tag in NodeTag}

    def contains(self, x: float, mu: float) -> bool:
        return bool(self.x[0] <= x <= self.x[-1] and self.mu[0] <= mu <= self.mu[-1])

    def nearest_column(self, mu) -> np.ndarray | int:
        j = np.rint((np.asarray(mu, dtype=float) - self.spec.mu_min) / self.spec.dmu).astype(int)
        j = np.clip(j, 0, self.spec.nmu - 1)
        return int(j) if np.ndim(mu) == 0 else j


def build(spec: GridSpec, model: ModelParams) -> Grid:
    """Validate ``spec`` against the model domain and lay out nodes and tags."""
    if spec.nx < 3 or spec.nmu < 3:
        raise GridError(f"grid.nx and grid.nmu must be at least 3, got nx={spec.nx}, nmu={spec.nmu}")
    if not spec.x_max > spec.x_min:
        raise GridError(f"grid.x_max must exceed grid.x_min, got x_max={spec.x_max}, x_min={spec.x_min}")
    if spec.x_min > 0:
        raise GridError(f"grid.x_min must be <= 0, got {spec.x_min}")
    if not spec.mu_min < spec.mu_max:
        raise GridError(f"grid.mu_min must be below grid.mu_max, got [{spec.mu_min}, {spec.mu_max}]")
    lo, hi = model.domain
    if spec.mu_min < lo or spec.mu_max > hi:
        raise GridError(f"mu range [{spec.mu_min}, {spec.mu_max}] leaves the drift domain [{lo}, {hi}]")
    for end, label in ((spec.mu_min, "grid.mu_min"), (spec.mu_max, "grid.mu_max")):
        if sigma_tilde(model, end) <= 0 and not spec.one_sided_at_boundary:
            raise GridError(f"{label} = {end} is a degenerate point (sigma_tilde = 0); "
                            "start the grid inside the domain or set one_sided_at_boundary")

    x = spec.x_min + np.arange(spec.nx) * spec.dx
    mu = spec.mu_min + np.arange(spec.nmu) * spec.dmu

    tags = np.full((spec.nx, spec.nmu), NodeTag.INTERIOR, dtype=np.int8)
    tags[:, 0] = NodeTag.MU_MIN
    tags[:, -1] = NodeTag.MU_MAX
    tags[0, :] = NodeTag.X_ZERO
    tags[-1, :] = NodeTag.X_MAX
    for i in (0, -1):
        for j in (0, -1):
            tags[i, j] = NodeTag.CORNER

    logger.debug("grid %dx%d on x in [%g, %g], mu in [%g, %g]",
                 spec.nx, spec.nmu, spec.x_min, spec.x_max, spec.mu_min, spec.mu_max)
    return Grid(spec=spec, x=x, mu=mu, tags=tags)
