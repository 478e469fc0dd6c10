import logging

import numpy as np
import pytest
import scipy.sparse as sp

from dividend_optimizer.grid import GridSpec, build
from dividend_optimizer.operator import GeneratorScheme
from dividend_optimizer.solver import (
    HaltReason,
    PolicyField,
    backward_gradient,
    continuation_runs,
    default_K,
    gradient_tolerance,
    improve_dividends,
    k_continuation,
    policy_iteration,
    solve_linear,
    starting_rates,
)


def test_default_penalization(grid):
    assert default_K(grid) == pytest.approx(100.0 / grid.dx)


def test_converges_with_zero_tolerance(base_solution):
    _, _, report = base_solution
    assert report.halt_reason is HaltReason.POLICY_FIXED
    assert report.converged
    assert report.iterations == len(report.residual_history)
    assert report.linear_fallbacks == 0


def test_value_solves_the_linear_system_of_its_policy(model, grid, base_solution):
    value, policy, _ = base_solution
    scheme = GeneratorScheme(model, grid)
    ell = starting_rates(policy.ell, scheme, policy.K)
    residual = scheme.assemble(ell).residual(value)
    scale = np.max(np.abs(value)) * policy.K / grid.dx
    assert np.max(np.abs(residual)) <= 1e-10 * scale


def test_no_node_improves_at_convergence(model, grid, base_solution):
    value, policy, _ = base_solution
    scheme = GeneratorScheme(model, grid)
    ell = starting_rates(policy.ell, scheme, policy.K)
    np.testing.assert_array_equal(improve_dividends(value, ell, scheme, policy.K), ell)


def test_policy_is_bang_bang(base_solution):
    _, policy, _ = base_solution
    assert np.all((policy.ell == 0.0) | (policy.ell == policy.K))


def test_ruin_row_is_zero_and_reports_the_row_above(base_solution):
    value, policy, _ = base_solution
    assert np.all(value[0] == 0.0)
    np.testing.assert_array_equal(policy.ell[0], policy.ell[1])


def test_deep_negative_profitability_liquidates(model, grid, base_solution):
    value, policy, _ = base_solution
    j = grid.nearest_column(-3.5)
    eps = gradient_tolerance(model, grid, policy.K)
    np.testing.assert_allclose(value[:, j], grid.x, atol=grid.spec.x_max * eps)
    assert np.all(policy.ell[:, j] == policy.K)


def test_value_iterates_increase(model, grid):
    values = [policy_iteration(model, grid, max_iter=n)[0] for n in (1, 2, 3)]
    assert np.all(values[1] >= values[0] - 1e-9)
    assert np.all(values[2] >= values[1] - 1e-9)


def test_max_iter_is_reported(model, grid, caplog):
    with caplog.at_level(logging.WARNING, logger="dividend_optimizer.solver"):
        value, policy, report = policy_iteration(model, grid, max_iter=1)
    assert report.halt_reason is HaltReason.MAX_ITER
    assert not report.converged
    assert report.iterations == 1
    assert "no fixed point" in caplog.text
    # the returned policy is the one the value belongs to
    assert np.all(policy.ell[1:-1] == 0.0)


def test_iterations_are_logged(model, caplog):
    small = build(GridSpec(x_max=5.0, mu_min=-2.0, mu_max=2.0, nx=11, nmu=11), model)
    with caplog.at_level(logging.INFO, logger="dividend_optimizer.solver"):
        _, _, report = policy_iteration(model, small)
    assert "iteration 1" in caplog.text
    assert report.halt_reason.value in caplog.text


def test_tolerance_halt(model, grid):
    _, _, report = policy_iteration(model, grid, tau=1e3)
    assert report.halt_reason is HaltReason.TOLERANCE
    assert report.iterations == 2


def test_report_serializes(base_solution):
    out = base_solution[2].to_dict()
    assert out["halt_reason"] == "POLICY_FIXED"
    assert set(out) >= {"iterations", "residual_history", "wall_time", "K"}


def test_warm_start_from_the_converged_policy(model, grid, base_solution):
    value, policy, _ = base_solution
    again, _, report = policy_iteration(model, grid, policy.K, initial_policy=policy)
    assert report.iterations == 1
    np.testing.assert_allclose(again, value, atol=1e-10)


def test_penalization_ordering(model, grid):
    runs = dict(k_continuation(model, grid, [10.0, 50.0, 100.0]))
    assert np.all(runs[50.0] >= runs[10.0] - 1e-8)
    assert np.all(runs[100.0] >= runs[50.0] - 1e-8)
    assert np.max(runs[100.0] - runs[50.0]) < np.max(runs[50.0] - runs[10.0])


def test_single_step_schedule_matches_one_solve(model, grid):
    [(K, value)] = k_continuation(model, grid, [200.0])
    direct, _, _ = policy_iteration(model, grid, 200.0)
    assert K == 200.0
    np.testing.assert_array_equal(value, direct)


@pytest.mark.parametrize("schedule", [[], [10.0, 10.0], [50.0, 10.0], [-1.0, 10.0]])
def test_invalid_schedules(model, grid, schedule):
    with pytest.raises(ValueError, match="k_schedule"):
        list(continuation_runs(model, grid, schedule))


def test_invalid_tolerance_and_iteration_cap(model, grid):
    with pytest.raises(ValueError, match="tau"):
        policy_iteration(model, grid, tau=-1.0)
    with pytest.raises(ValueError, match="max_iter"):
        policy_iteration(model, grid, max_iter=0)


def test_policy_field_bounds(grid):
    with pytest.raises(ValueError):
        PolicyField(ell=np.full(grid.shape, 2.0), K=1.0)
    with pytest.raises(ValueError):
        PolicyField(ell=np.zeros(grid.shape), K=0.0)
    assert PolicyField.zeros(grid, 5.0).retain().all()


def test_backward_gradient_uses_zero_below_the_grid():
    grad = backward_gradient(np.array([[0.5], [1.5], [2.0]]), 0.5)
    np.testing.assert_allclose(grad[:, 0], [1.0, 2.0, 1.0])


def test_linear_solve_accuracy():
    rng = np.random.default_rng(3)
    n = 50
    A = sp.diags([np.full(n, 4.0), np.full(n - 1, -1.0), np.full(n - 1, -1.0)], [0, 1, -1], format="csr")
    b = rng.normal(size=n)
    x = solve_linear(A, b)
    np.testing.assert_allclose(A @ x, b, atol=1e-12)
