"""Command-line entry point.

    python -m dividend_optimizer solve --config configs/baseline.yaml --out runs/baseline

Exit status: 0 on success, 1 on configuration or validation errors, 2 when
policy iteration stops at solver.max_iter.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .analysis import Boundaries, extract_boundaries, invariant_report
from .artifacts import RunArtifacts, write_frame_atomic
from .closed_form import (
    auxiliary_lp,
    deterministic_boundary_table,
    deterministic_mu_star,
    solve_auxiliary,
)
from .config import SWEEP_PARAMETERS, RunConfig, dump_config, load_config
from .errors import ConfigError, DividendOptimizerError
from .extensions import solve_credit_line, solve_fixed_issuance, solve_proportional_issuance
from .grid import Grid, build
from .mc import compare_with_grid
from .model import validate_assumptions
from .solver import HaltReason, PolicyField, SolveReport, continuation_runs, policy_iteration

logger = logging.getLogger(__name__)

LOG_LEVEL_ENV = "DIVOPT_LOG_LEVEL"
EXIT_OK, EXIT_ERROR, EXIT_MAX_ITER = 0, 1, 2


def _configure_logging(level: str) -> None:
    logging.basicConfig(level=level.upper(), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(level.upper())
    logging.captureWarnings(True)


def _status(report: SolveReport) -> int:
    return EXIT_OK if report.converged else EXIT_MAX_ITER


def _optional(value: float | None) -> float | None:
    return None if value is None or (isinstance(value, float) and math.isnan(value)) else value


def value_frame(grid: Grid, value: np.ndarray, policy: PolicyField) -> pd.DataFrame:
    X, MU = grid.mesh
    return pd.DataFrame({"x": X.ravel(), "mu": MU.ravel(), "V": value.ravel(), "ell": policy.ell.ravel()})


# --------------------------
# Solves
# --------------------------

def _solve(cfg: RunConfig, mode: str | None = None):
    """Run the configured solve; returns (model, grid, value, policy, boundaries, report)."""
    mode = mode or cfg.mode
    model = cfg.model_params()
    spec = cfg.grid_spec(model)
    if mode == "credit_line":
        spec = cfg.credit_spec().grid_spec(spec)
    grid = build(spec, model)
    K, tau, max_iter = cfg.penalization(), cfg.solver.tau, cfg.solver.max_iter
    if mode == "proportional_issuance":
        value, policy, boundaries, report = solve_proportional_issuance(model, grid, cfg.issuance_spec(), K, tau,
                                                                        max_iter)
    elif mode == "fixed_issuance":
        value, policy, boundaries, report = solve_fixed_issuance(model, grid, cfg.issuance_spec(), K, tau, max_iter)
    elif mode == "credit_line":
        value, policy, boundaries, report = solve_credit_line(model, grid, cfg.credit_spec(), K, tau, max_iter)
    elif cfg.solver.k_schedule:
        *_, (_, value, policy, report) = continuation_runs(model, grid, cfg.solver.k_schedule, tau, max_iter)
        boundaries = extract_boundaries(policy, grid)
    else:
        value, policy, report = policy_iteration(model, grid, K, tau, max_iter)
        boundaries = extract_boundaries(policy, grid)
    return model, grid, value, policy, boundaries, report


def _report_payload(mode: str, grid: Grid, boundaries: Boundaries, report: SolveReport,
                    invariants: pd.DataFrame | None) -> dict:
    payload = {
        "mode": mode,
        "solve": report.to_dict(),
        "grid": {"nx": grid.nx, "nmu": grid.nmu, "x_min": float(grid.x[0]), "x_max": float(grid.x[-1]),
                 "mu_min": float(grid.mu[0]), "mu_max": float(grid.mu[-1])},
        "mu_star": _optional(boundaries.mu_star),
        "issuance_threshold": _optional(boundaries.issuance_threshold),
        "anomalies": list(boundaries.anomalies),
    }
    if invariants is not None:
        payload["invariants"] = invariants.to_dict(orient="records")
    return payload


def run_solve(cfg: RunConfig, out: Path) -> int:
    mode = cfg.mode
    if mode == "deterministic":
        return run_deterministic(cfg, out)
    if mode == "auxiliary":
        return run_auxiliary(cfg, out)
    if mode == "mc":
        return run_mc(cfg, out)
    model, grid, value, policy, boundaries, report = _solve(cfg)
    invariants = None
    if mode == "base":
        auxiliary = solve_auxiliary(model, grid.mu)
        invariants = invariant_report(model, grid, value, policy, auxiliary=auxiliary,
                                      gradient_c=cfg.solver.gradient_c)
    with RunArtifacts(out) as run:
        run.csv("boundaries.csv", boundaries.to_frame())
        run.csv("value.csv", value_frame(grid, value, policy))
        run.json("report.json", _report_payload(mode, grid, boundaries, report, invariants))
        run.yaml("config.yaml", dump_config(cfg))

    print("Status:", report.halt_reason.value)
    print(f"Iterations = {report.iterations}, wall time = {report.wall_time:.2f} s")
    print("mu_star =", "ABSENT" if boundaries.mu_star is None else f"{boundaries.mu_star:.6f}")
    if boundaries.issuance_threshold is not None:
        print(f"issuance threshold = {boundaries.issuance_threshold:.6f}")
    return _status(report)


def run_deterministic(cfg: RunConfig, out: Path) -> int:
    p = cfg.deterministic_params()
    d = cfg.deterministic
    table = deterministic_boundary_table(p, d.mu_min, d.mu_max, d.n)
    mu_star = deterministic_mu_star(p)
    with RunArtifacts(out) as run:
        run.csv("deterministic.csv", table)
        run.json("report.json", {"mode": "deterministic", "mu_star": mu_star, "value_at_origin": p.value_at_origin})
        run.yaml("config.yaml", dump_config(cfg))
    print("Status: Optimal")
    print(f"mu_star = {mu_star:.10f}")
    print(f"V(0,0) = {p.value_at_origin:.6f}")
    return EXIT_OK


def run_auxiliary(cfg: RunConfig, out: Path) -> int:
    model = cfg.model_params()
    grid = build(cfg.grid_spec(model), model)
    solution = solve_auxiliary(model, grid.mu, cfg.penalization())
    table = pd.DataFrame({"mu": solution.mu, "Va": solution.values})
    payload = {"mode": "auxiliary", "mu_star": solution.mu_star,
               "solve": solution.report.to_dict() if solution.report else None}
    if cfg.auxiliary.check_lp:
        exact = auxiliary_lp(model, grid.mu)
        table["VaLP"] = exact
        payload["lp_max_abs_diff"] = float(np.max(np.abs(exact - solution.values)))
    with RunArtifacts(out) as run:
        run.csv("auxiliary.csv", table)
        run.json("report.json", payload)
        run.yaml("config.yaml", dump_config(cfg))
    print("Status:", solution.report.halt_reason.value if solution.report else "n/a")
    print("mu_star =", "ABSENT" if solution.mu_star is None else f"{solution.mu_star:.6f}")
    if "lp_max_abs_diff" in payload:
        print(f"max |V_a - V_a(LP)| = {payload['lp_max_abs_diff']:.3e}")
    return _status(solution.report) if solution.report else EXIT_OK


def run_mc(cfg: RunConfig, out: Path, threads: int = 1, seed: int | None = None) -> int:
    model, grid, value, policy, boundaries, report = _solve(cfg, mode="base")
    table = compare_with_grid(model, grid, value, boundaries, [tuple(p) for p in cfg.mc.points],
                              cfg.sim_config(seed), threads=threads, allowance=cfg.mc.allowance)
    with RunArtifacts(out) as run:
        run.csv("mc.csv", table)
        run.csv("boundaries.csv", boundaries.to_frame())
        run.json("report.json", _report_payload("mc", grid, boundaries, report, None))
        run.yaml("config.yaml", dump_config(cfg))
    print("Status:", report.halt_reason.value)
    for row in table.itertuples():
        print(f"(x={row.x:g}, mu={row.mu:g}): MC {row.mcMean:.5f} +/- {row.stdError:.5f}, "
              f"grid {row.gridValue:.5f}, within tolerance: {row.within}")
    return _status(report)


def run_validate(cfg: RunConfig, out: Path) -> int:
    model = cfg.model_params()
    spec = cfg.grid_spec(model)
    result = validate_assumptions(model, (spec.mu_min, spec.mu_max), cfg.validation.n_samples)
    frame = result.to_frame()
    with RunArtifacts(out) as run:
        run.csv("validation.csv", frame)
        run.yaml("config.yaml", dump_config(cfg))
    print("Status:", "PASS" if result.passed else "FAIL")
    print(frame.to_string(index=False))
    return EXIT_OK if result.passed else EXIT_ERROR


def _value_label(parameter: str, value: float) -> str:
    return f"{parameter}={value:g}"


def run_sweep(cfg: RunConfig, parameter: str, values: Sequence[float], out: Path, threads: int = 1) -> int:
    """Base solve per value on the grid of the unswept config; continues past failures."""
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"--param must be one of {SWEEP_PARAMETERS}, got {parameter!r}")
    if not values:
        raise ConfigError("--values must list at least one value")
    base_model = cfg.model_params()
    shared = cfg.grid_spec(base_model)
    pinned = cfg.model_copy(update={"mode": "base", "grid": cfg.grid.model_copy(
        update={"mu_min": shared.mu_min, "mu_max": shared.mu_max})})

    def one(value: float) -> dict:
        row = {"parameter": parameter, "value": value, "status": "error", "iterations": None,
               "mu_star": None, "barrier_height": None, "error": ""}
        try:
            run_cfg = pinned.with_parameter(parameter, value)
            model, grid, v, policy, boundaries, report = _solve(run_cfg)
            with RunArtifacts(out / _value_label(parameter, value)) as run:
                run.csv("boundaries.csv", boundaries.to_frame())
                run.csv("value.csv", value_frame(grid, v, policy))
                run.json("report.json", _report_payload("base", grid, boundaries, report, None))
                run.yaml("config.yaml", dump_config(run_cfg))
            row.update(status=report.halt_reason.value, iterations=report.iterations,
                       mu_star=boundaries.mu_star, barrier_height=boundaries.barrier_height(run_cfg.drift.mu_bar))
        except (DividendOptimizerError, ValueError) as exc:
            logger.error("sweep %s: %s", _value_label(parameter, value), exc)
            row["error"] = str(exc)
        return row

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, values))
    else:
        rows = [one(v) for v in values]
    summary = pd.DataFrame(rows)
    write_frame_atomic(out / "summary.csv", summary)
    print(summary.to_string(index=False))
    if (summary["status"] == "error").any():
        return EXIT_ERROR
    if (summary["status"] == HaltReason.MAX_ITER.value).any():
        return EXIT_MAX_ITER
    return EXIT_OK


# --------------------------
# Argument parsing
# --------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dividend_optimizer",
                                     description="Optimal dividends with stochastic profitability")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Path to YAML configuration (defaults to the baseline)")
    common.add_argument("--out", type=Path, help="Output directory (overrides output in the config)")
    common.add_argument("--threads", type=int, default=1, help="Worker threads for sweeps and Monte Carlo")
    common.add_argument("--seed", type=int, help="Override mc.seed")
    common.add_argument("--log-level", default=os.environ.get(LOG_LEVEL_ENV, "INFO"),
                        help=f"Logging level (default from ${LOG_LEVEL_ENV} or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="Run the configured mode")
    sweep = sub.add_parser("sweep", parents=[common], help="Base solve for each value of one parameter")
    sweep.add_argument("--param", required=True, choices=SWEEP_PARAMETERS)
    sweep.add_argument("--values", type=float, nargs="*", default=[])
    sub.add_parser("deterministic", parents=[common], help="Closed-form deterministic boundary table")
    aux = sub.add_parser("auxiliary", parents=[common], help="Real-option value V_a and its threshold")
    aux.add_argument("--check-lp", action="store_true", help="Cross-check V_a against the LP formulation")
    sub.add_parser("mc", parents=[common], help="Monte Carlo check of the base solve")
    sub.add_parser("validate", parents=[common], help="Report the drift assumption checks")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.log_level)
    try:
        cfg = load_config(args.config) if args.config is not None else RunConfig()
        out = args.out if args.out is not None else Path(cfg.output)
        if args.threads < 1:
            raise ConfigError(f"--threads must be at least 1, got {args.threads}")
        if args.command == "solve":
            return run_solve(cfg, out) if cfg.mode != "mc" else run_mc(cfg, out, args.threads, args.seed)
        if args.command == "sweep":
            return run_sweep(cfg, args.param, args.values, out, args.threads)
        if args.command == "deterministic":
            return run_deterministic(cfg, out)
        if args.command == "auxiliary":
            if args.check_lp:
                cfg = cfg.model_copy(update={"auxiliary": cfg.auxiliary.model_copy(update={"check_lp": True})})
            return run_auxiliary(cfg, out)
        if args.command == "mc":
            return run_mc(cfg, out, args.threads, args.seed)
        return run_validate(cfg, out)
    except (DividendOptimizerError, ValueError) as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
