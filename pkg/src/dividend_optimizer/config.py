"""YAML run configuration with a pydantic schema.

Missing sections fall back to the baseline parameter set
(r = 0.05, k = 0.5, mu_bar = 0.15, sigma_tilde = 0.3, sigma = 0.1, rho = 0).
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from ruamel.yaml import YAML
from ruamel.yaml.error import YAMLError

from .closed_form import DeterministicParams
from .errors import ConfigError
from .extensions import CreditLineSpec, IssuanceSpec, LogisticCost
from .grid import DEFAULT_NODES, DEFAULT_X_MAX, GridSpec
from .mc import SimConfig
from .model import CIR, ModelParams, OrnsteinUhlenbeck

logger = logging.getLogger(__name__)

SWEEP_PARAMETERS = ("k", "mu_bar", "sigma_tilde", "sigma", "rho")
ISSUANCE_MODES = ("proportional_issuance", "fixed_issuance")
Mode = Literal["base", "proportional_issuance", "fixed_issuance", "credit_line", "deterministic",
               "auxiliary", "mc"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Section):
    r: float = Field(0.05, gt=0)
    sigma: float = Field(0.1, gt=0)
    rho: float = Field(0.0, ge=-1, le=1)


class DriftSection(_Section):
    kind: Literal["ou", "cir"] = "ou"
    k: float = Field(0.5, gt=0)
    mu_bar: float = 0.15
    sigma_tilde: float = Field(0.3, gt=0)
    a: Optional[float] = None

    @model_validator(mode="after")
    def _cir_needs_a(self) -> "DriftSection":
        if self.kind == "cir" and self.a is None:
            raise ValueError("drift.a is required for kind 'cir'")
        return self


class GridSection(_Section):
    x_max: float = Field(DEFAULT_X_MAX, gt=0)
    mu_min: Optional[float] = None
    mu_max: Optional[float] = None
    nx: int = Field(DEFAULT_NODES, ge=3)
    nmu: int = Field(DEFAULT_NODES, ge=3)
    x_min: float = Field(0.0, le=0)
    one_sided_at_boundary: bool = False


class SolverSection(_Section):
    K: Union[float, Literal["auto"]] = "auto"
    tau: float = Field(0.0, ge=0)
    max_iter: int = Field(200, ge=1)
    k_schedule: Optional[list[float]] = None
    gradient_c: Optional[float] = Field(None, gt=0)


class CostSection(_Section):
    high: float = Field(ge=0)
    low: float = Field(ge=0)
    midpoint: float = 0.0
    scale: float = Field(0.25, gt=0)

    def build(self) -> LogisticCost:
        return LogisticCost(self.high, self.low, self.midpoint, self.scale)


class IssuanceSection(_Section):
    lambda_p: CostSection = CostSection(high=0.34, low=0.25)
    lambda_f: CostSection = CostSection(high=0.14, low=0.06)


class CreditLineSection(_Section):
    rho_minus: float = Field(0.0, ge=0)
    x_lower: Union[float, list[tuple[float, float]]] = 0.0


class McSection(_Section):
    n_paths: int = Field(10_000, ge=100)
    dt: float = Field(1e-3, gt=0)
    t_horizon: Optional[float] = None
    seed: int = 0
    antithetic: bool = False
    block_size: int = Field(4096, ge=1)
    points: list[tuple[float, float]] = [(0.5, 0.15)]
    allowance: float = Field(0.05, ge=0)


class DeterministicSection(_Section):
    mu_min: float = -3.0
    mu_max: float = Field(0.0, le=0)
    n: int = Field(201, ge=2)


class AuxiliarySection(_Section):
    check_lp: bool = False


class ValidationSection(_Section):
    n_samples: int = Field(100, ge=2)


class RunConfig(_Section):
    model: ModelSection = ModelSection()
    drift: DriftSection = DriftSection()
    grid: GridSection = GridSection()
    solver: SolverSection = SolverSection()
    mode: Mode = "base"
    issuance: Optional[IssuanceSection] = None
    credit_line: Optional[CreditLineSection] = None
    mc: McSection = McSection()
    deterministic: DeterministicSection = DeterministicSection()
    auxiliary: AuxiliarySection = AuxiliarySection()
    validation: ValidationSection = ValidationSection()
    output: str = "runs/baseline"

    @model_validator(mode="after")
    def _mode_sections(self) -> "RunConfig":
        if (self.mode in ISSUANCE_MODES) != (self.issuance is not None):
            raise ValueError(f"issuance section must be present exactly when mode is one of {ISSUANCE_MODES}")
        if (self.mode == "credit_line") != (self.credit_line is not None):
            raise ValueError("credit_line section must be present exactly when mode is 'credit_line'")
        return self

    # --------------------------
    # Builders
    # --------------------------

    def model_params(self) -> ModelParams:
        d = self.drift
        if d.kind == "cir":
            drift = CIR(k=d.k, mu_bar=d.mu_bar, sigma_tilde=d.sigma_tilde, a=float(d.a))
        else:
            drift = OrnsteinUhlenbeck(k=d.k, mu_bar=d.mu_bar, sigma_tilde=d.sigma_tilde)
        return ModelParams(r=self.model.r, sigma=self.model.sigma, rho=self.model.rho, drift=drift)

    def grid_spec(self, model: ModelParams) -> GridSpec:
        g = self.grid
        spec = GridSpec.default_for(model, nx=g.nx, nmu=g.nmu, x_max=g.x_max) \
            if g.mu_min is None or g.mu_max is None else None
        return GridSpec(
            x_max=g.x_max,
            mu_min=g.mu_min if g.mu_min is not None else spec.mu_min,
            mu_max=g.mu_max if g.mu_max is not None else spec.mu_max,
            nx=g.nx,
            nmu=g.nmu,
            x_min=g.x_min,
            one_sided_at_boundary=g.one_sided_at_boundary,
        )

    def penalization(self) -> float | None:
        return None if self.solver.K == "auto" else float(self.solver.K)

    def issuance_spec(self) -> IssuanceSpec:
        section = self.issuance or IssuanceSection()
        return IssuanceSpec(lambda_p=section.lambda_p.build(), lambda_f=section.lambda_f.build())

    def credit_spec(self) -> CreditLineSpec:
        section = self.credit_line or CreditLineSection()
        x_lower = section.x_lower
        if isinstance(x_lower, list):
            x_lower = tuple((float(m), float(x)) for m, x in x_lower)
        return CreditLineSpec(rho_minus=section.rho_minus, x_lower=x_lower)

    def sim_config(self, seed: int | None = None) -> SimConfig:
        m = self.mc
        return SimConfig(n_paths=m.n_paths, dt=m.dt, t_horizon=m.t_horizon,
                         seed=m.seed if seed is None else seed, antithetic=m.antithetic,
                         block_size=m.block_size)

    def deterministic_params(self) -> DeterministicParams:
        return DeterministicParams(r=self.model.r, k=self.drift.k, mu_bar=self.drift.mu_bar)

    def with_parameter(self, name: str, value: float) -> "RunConfig":
        """Copy with one sweep parameter replaced."""
        if name not in SWEEP_PARAMETERS:
            raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMETERS}, got {name!r}")
        section = "model" if name in ("sigma", "rho") else "drift"
        updated = getattr(self, section).model_copy(update={name: value})
        try:
            return type(self).model_validate({**self.model_dump(), section: updated.model_dump()})
        except ValidationError as exc:
            raise ConfigError(_describe(exc)) from exc


def _describe(exc: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors())


def load_config(path: Path | str) -> RunConfig:
    """Read and validate a YAML run configuration."""
    source = Path(path)
    yaml = YAML(typ="safe")
    try:
        with source.open("r", encoding="utf-8") as fh:
            data = yaml.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {source}") from exc
    except (OSError, YAMLError) as exc:
        raise ConfigError(f"cannot read config file {source}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {source} must contain a mapping at the top level")
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid config {source}: {_describe(exc)}") from exc
    logger.debug("loaded config %s (mode=%s)", source, cfg.mode)
    return cfg


def dump_config(cfg: RunConfig) -> dict:
    """Plain-data echo of the resolved configuration."""
    return cfg.model_dump(mode="json")
