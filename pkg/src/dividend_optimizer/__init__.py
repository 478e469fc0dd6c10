"""Optimal dividends with stochastic profitability.

Penalized policy iteration for the dividend HJB variational inequality,
free-boundary extraction, closed-form and Monte Carlo oracles, and the
issuance and credit-line variants.
"""

from .analysis import Boundaries, Regime, classify_point, extract_boundaries, invariant_report
from .closed_form import (
    AuxiliarySolution,
    DeterministicParams,
    auxiliary_lp,
    deterministic_boundary_table,
    deterministic_mu_star,
    deterministic_value,
    solve_auxiliary,
    tau0,
    x_b,
)
from .extensions import (
    CreditLineSpec,
    IssuanceSpec,
    LogisticCost,
    solve_credit_line,
    solve_fixed_issuance,
    solve_proportional_issuance,
)
from .grid import Grid, GridSpec, NodeTag, build
from .mc import McEstimate, SimConfig, simulate_policy
from .model import CIR, CustomDrift, ModelParams, OrnsteinUhlenbeck, kappa, sigma_tilde, validate_assumptions
from .operator import DiscreteOperator, GeneratorScheme, assemble
from .solver import HaltReason, PolicyField, SolveReport, k_continuation, policy_iteration

__all__ = [
    "AuxiliarySolution",
    "Boundaries",
    "CIR",
    "CreditLineSpec",
    "CustomDrift",
    "DeterministicParams",
    "DiscreteOperator",
    "GeneratorScheme",
    "Grid",
    "GridSpec",
    "HaltReason",
    "IssuanceSpec",
    "LogisticCost",
    "McEstimate",
    "ModelParams",
    "NodeTag",
    "OrnsteinUhlenbeck",
    "PolicyField",
    "Regime",
    "SimConfig",
    "SolveReport",
    "assemble",
    "auxiliary_lp",
    "build",
    "classify_point",
    "deterministic_boundary_table",
    "deterministic_mu_star",
    "deterministic_value",
    "extract_boundaries",
    "invariant_report",
    "k_continuation",
    "kappa",
    "policy_iteration",
    "sigma_tilde",
    "simulate_policy",
    "solve_auxiliary",
    "solve_credit_line",
    "solve_fixed_issuance",
    "solve_proportional_issuance",
    "tau0",
    "validate_assumptions",
    "x_b",
]
