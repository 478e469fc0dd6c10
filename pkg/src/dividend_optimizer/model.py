"""Profitability dynamics and global model parameters.

The cash reserves follow dX = mu dt + sigma dW - dL and the profitability
follows d(mu) = kappa(mu) dt + sigma_tilde(mu) dW~ with corr(W, W~) = rho.
Time is measured in years and all rates are per year.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np
import pandas as pd

from .errors import DomainError, ModelError

logger = logging.getLogger(__name__)

ArrayFn = Callable[[np.ndarray], np.ndarray]


# --------------------------
# Drift variants
# --------------------------

@dataclass(frozen=True)
class OrnsteinUhlenbeck:
    """kappa(mu) = k (mu_bar - mu) with constant volatility on the whole line."""

    k: float
    mu_bar: float
    sigma_tilde: float

    @property
    def domain(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def rate(self, mu: np.ndarray) -> np.ndarray:
        return self.k * (self.mu_bar - mu)

    def volatility(self, mu: np.ndarray) -> np.ndarray:
        return np.full_like(mu, self.sigma_tilde, dtype=float)


@dataclass(frozen=True)
class CIR:
    """Square-root diffusion on [a, inf): sigma_tilde(mu) = sigma_tilde * sqrt(mu - a)."""

    k: float
    mu_bar: float
    sigma_tilde: float
    a: float

    @property
    def domain(self) -> tuple[float, float]:
        return (self.a, math.inf)

    def rate(self, mu: np.ndarray) -> np.ndarray:
        return self.k * (self.mu_bar - mu)

    def volatility(self, mu: np.ndarray) -> np.ndarray:
        return self.sigma_tilde * np.sqrt(np.maximum(mu - self.a, 0.0))


@dataclass(frozen=True)
class CustomDrift:
    """User-supplied drift and volatility on a closed interval domain."""

    kappa_fn: ArrayFn
    sigma_tilde_fn: ArrayFn
    domain: tuple[float, float] = (-math.inf, math.inf)

    def rate(self, mu: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.kappa_fn(mu), dtype=float), np.shape(mu)).copy()

    def volatility(self, mu: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.sigma_tilde_fn(mu), dtype=float), np.shape(mu)).copy()


DriftSpec = Union[OrnsteinUhlenbeck, CIR, CustomDrift]


@dataclass(frozen=True)
class ModelParams:
    r: float                 # discount rate, 1/year
    sigma: float             # cash-flow volatility
    rho: float               # correlation between the two Brownian motions
    drift: DriftSpec

    def __post_init__(self) -> None:
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ModelError(f"model.r must be positive, got {self.r}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ModelError(f"model.sigma must be positive, got {self.sigma}")
        if not -1.0 <= self.rho <= 1.0:
            raise ModelError(f"model.rho must lie in [-1, 1], got {self.rho}")
        drift = self.drift
        if isinstance(drift, (OrnsteinUhlenbeck, CIR)):
            if not drift.k > 0:
                raise ModelError(f"drift.k must be positive, got {drift.k}")
            if not drift.sigma_tilde > 0:
                raise ModelError(f"drift.sigma_tilde must be positive, got {drift.sigma_tilde}")
        elif isinstance(drift, CustomDrift):
            lo, hi = drift.domain
            if not lo < hi:
                raise ModelError(f"custom drift domain must satisfy lo < hi, got {drift.domain}")
        else:
            raise ModelError(f"unknown drift variant {type(drift).__name__}")

    @property
    def domain(self) -> tuple[float, float]:
        return self.drift.domain

    def with_drift(self, **changes: float) -> "ModelParams":
        """Copy with drift fields replaced (used by parameter sweeps)."""
        return replace(self, drift=replace(self.drift, **changes))


def _in_domain(params: ModelParams, mu) -> np.ndarray:
    arr = np.asarray(mu, dtype=float)
    lo, hi = params.domain
    bad = ~np.isfinite(arr) | (arr < lo) | (arr > hi)
    if np.any(bad):
        raise DomainError(f"mu = {arr[bad].flat[0]!r} lies outside the drift domain [{lo}, {hi}]")
    return arr


def kappa(params: ModelParams, mu):
    """Drift rate of the profitability at ``mu`` (scalar or array)."""
    arr = _in_domain(params, mu)
    out = params.drift.rate(arr)
    return float(out) if np.ndim(mu) == 0 else out


def sigma_tilde(params: ModelParams, mu):
    """Volatility of the profitability at ``mu`` (scalar or array)."""
    arr = _in_domain(params, mu)
    out = params.drift.volatility(arr)
    return float(out) if np.ndim(mu) == 0 else out


# --------------------------
# Standing-assumption checks
# --------------------------

class CheckStatus(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    NOT_CHECKED = "not checked"


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: CheckStatus
    offending: tuple[float, ...] = ()
    note: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[CheckResult, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(c.status is not CheckStatus.FAIL for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "check": [c.name for c in self.checks],
                "status": [c.status.value for c in self.checks],
                "offending": [" ".join(f"{m:.6g}" for m in c.offending) for c in self.checks],
                "note": [c.note for c in self.checks],
            }
        )


# ratio of the edge value of sigma_tilde^2 / (1 + |mu|) to its inner-half maximum
_GROWTH_SLACK = 1.5


def validate_assumptions(params: ModelParams, check_interval: tuple[float, float],
                         n_samples: int) -> ValidationReport:
    """Sample kappa and sigma_tilde and report proxies for the standing assumptions.

    The growth conditions are asymptotic, so only proxies at the extremes of
    ``check_interval`` can be checked. The boundary alternative (Lipschitz
    sigma_tilde^2 on the boundary, or the Feller-type limits) is reported as
    not checked for custom drifts.
    """
    if n_samples < 2:
        raise ModelError(f"n_samples must be at least 2, got {n_samples}")
    lo, hi = check_interval
    if not lo < hi:
        raise ModelError(f"check interval must satisfy lo < hi, got {check_interval}")
    mu = np.linspace(lo, hi, n_samples)
    k_vals = kappa(params, mu)
    vol = sigma_tilde(params, mu)
    checks: list[CheckResult] = []

    # (a) -mu/kappa >= 0 and bounded at the top, -kappa/mu >= 0 at the bottom
    top = mu[-1]
    if top > 0:
        ratio = -top / k_vals[-1] if k_vals[-1] != 0 else math.inf
        ok = math.isfinite(ratio) and ratio >= 0
        checks.append(CheckResult("mean_reversion_upper", CheckStatus.PASS if ok else CheckStatus.FAIL,
                                  () if ok else (float(top),), f"-mu/kappa = {ratio:.6g} at mu = {top:.6g}"))
    else:
        checks.append(CheckResult("mean_reversion_upper", CheckStatus.NOT_CHECKED,
                                  note="interval has no positive mu"))
    bottom = mu[0]
    if bottom < 0:
        ratio = -k_vals[0] / bottom
        ok = math.isfinite(ratio) and ratio >= 0
        checks.append(CheckResult("mean_reversion_lower", CheckStatus.PASS if ok else CheckStatus.FAIL,
                                  () if ok else (float(bottom),), f"-kappa/mu = {ratio:.6g} at mu = {bottom:.6g}"))
    else:
        checks.append(CheckResult("mean_reversion_lower", CheckStatus.NOT_CHECKED,
                                  note="interval has no negative mu"))

    # (b) sigma_tilde^2 in O(mu)
    scaled = vol**2 / (1.0 + np.abs(mu))
    centre, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    inner = np.abs(mu - centre) <= 0.5 * half
    bound = _GROWTH_SLACK * float(scaled[inner].max()) + 1e-12
    edges = [(float(mu[0]), float(scaled[0])), (float(mu[-1]), float(scaled[-1]))]
    offending = tuple(m for m, s in edges if s > bound)
    checks.append(CheckResult("volatility_growth", CheckStatus.FAIL if offending else CheckStatus.PASS,
                              offending, f"edge sigma_tilde^2/(1+|mu|) bounded by {bound:.6g}"))

    # (c) sigma_tilde > 0 away from the boundary of M
    dlo, dhi = params.domain
    on_boundary = (mu == dlo) | (mu == dhi)
    zero = vol <= 0
    interior_zero = tuple(float(m) for m in mu[zero & ~on_boundary])
    boundary_zero = tuple(float(m) for m in mu[zero & on_boundary])
    note = "vanishes on the boundary of M" if boundary_zero else ""
    checks.append(CheckResult("volatility_positive", CheckStatus.FAIL if interior_zero else CheckStatus.PASS,
                              interior_zero + boundary_zero, note))

    # (d) boundary regularity alternative
    if isinstance(params.drift, CustomDrift):
        checks.append(CheckResult("boundary_regularity", CheckStatus.NOT_CHECKED,
                                  note="Feller-type limits cannot be checked from samples"))
    else:
        checks.append(CheckResult("boundary_regularity", CheckStatus.PASS,
                                  note="sigma_tilde^2 is Lipschitz up to the boundary"))

    report = ValidationReport(tuple(checks))
    logger.debug("assumption report on [%g, %g]: passed=%s", lo, hi, report.passed)
    return report
