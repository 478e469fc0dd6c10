"""Exception and warning types raised by the dividend optimizer."""

from __future__ import annotations


class DividendOptimizerError(Exception):
    """Base class for every error raised by this package."""


class ModelError(DividendOptimizerError, ValueError):
    """Invalid model parameters (r, sigma, rho or the drift variant)."""


class DomainError(DividendOptimizerError, ValueError):
    """A profitability value lies outside the drift's domain M."""


class GridError(DividendOptimizerError, ValueError):
    """Invalid grid specification."""


class MonotonicityViolation(DividendOptimizerError):
    """The cross-derivative stencil would produce a negative transition rate."""

    def __init__(self, node: tuple[int, int], cross: float, dx: float, dmu: float,
                 sigma: float, sigma_tilde: float) -> None:
        self.node = node
        lo = abs(cross) / sigma_tilde**2 if sigma_tilde > 0 else float("inf")
        hi = sigma**2 / abs(cross) if cross != 0 else float("inf")
        self.required_ratio = (lo, hi)
        super().__init__(
            f"cross term |rho*sigma*sigma_tilde| = {abs(cross):.6g} breaks monotonicity at node "
            f"(i={node[0]}, j={node[1]}); dx/dmu = {dx / dmu:.6g} must lie in [{lo:.6g}, {hi:.6g}]"
        )


class SolverError(DividendOptimizerError):
    """The linear solve failed to reach the required residual."""


class BracketNotFound(DividendOptimizerError):
    """Bisection could not find a sign change on the search interval."""


class MaskConsistencyError(DividendOptimizerError):
    """The credit-line ruin curve leaves the computational grid."""


class OutOfBoxError(DividendOptimizerError, ValueError):
    """A query point lies outside the grid box."""


class ConfigError(DividendOptimizerError):
    """Unreadable or invalid run configuration."""


class NonContiguousRetainRegion(UserWarning):
    """A mu-column's retain set has gaps."""


class TruncationWarning(UserWarning):
    """A free boundary touches the edge of the truncated domain."""
