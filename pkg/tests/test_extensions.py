import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dividend_optimizer.analysis import extract_boundaries
from dividend_optimizer.errors import MaskConsistencyError, ModelError
from dividend_optimizer.extensions import (
    FIXED_COST,
    PROPORTIONAL_COST,
    CreditLineSpec,
    IssuanceSpec,
    LogisticCost,
    issuance_gain,
    ruin_rows,
    solve_credit_line,
    solve_fixed_issuance,
    solve_proportional_issuance,
)
from dividend_optimizer.grid import GridSpec, build
from dividend_optimizer.solver import policy_iteration


def test_logistic_cost_midpoint_and_tails():
    cost = LogisticCost(high=0.34, low=0.25)
    assert cost(np.array(0.0)) == pytest.approx(0.295)
    assert cost(np.array(-5.0)) == pytest.approx(0.34, abs=1e-6)
    assert cost(np.array(5.0)) == pytest.approx(0.25, abs=1e-6)
    np.testing.assert_allclose(LogisticCost.constant(0.1)(np.linspace(-3, 3, 7)), 0.1)


@given(st.floats(min_value=-10.0, max_value=10.0), st.floats(min_value=-10.0, max_value=10.0))
def test_logistic_cost_decays_with_profitability(a, b):
    lo, hi = min(a, b), max(a, b)
    assert PROPORTIONAL_COST(lo) >= PROPORTIONAL_COST(hi)
    assert 0.25 <= PROPORTIONAL_COST(hi) <= 0.34


def test_invalid_costs():
    with pytest.raises(ModelError):
        LogisticCost(high=-0.1, low=0.0)
    with pytest.raises(ModelError):
        LogisticCost(high=0.1, low=0.0, scale=0.0)


# --------------------------
# Proportional issuance
# --------------------------

@pytest.fixture(scope="module")
def proportional(model, grid):
    return solve_proportional_issuance(model, grid, IssuanceSpec())


def test_prohibitive_proportional_cost_reproduces_the_base_solve(model, grid, base_solution):
    spec = IssuanceSpec(lambda_p=LogisticCost.constant(1e6))
    value, policy, _, report = solve_proportional_issuance(model, grid, spec)
    np.testing.assert_allclose(value, base_solution[0], atol=1e-10)
    assert not np.any(policy.iota)
    assert report.converged


def test_issuance_dominates_the_base_value(base_solution, proportional):
    value, _, _, report = proportional
    assert report.converged
    assert np.all(value >= base_solution[0] - 1e-8)


def test_issuance_only_from_zero_cash(grid, proportional):
    _, policy, boundaries, _ = proportional
    issuing = policy.iota >= 0.5 * policy.K
    assert issuing[0].any()
    assert not issuing[1:].any()
    assert boundaries.issuance_threshold is not None
    assert grid.mu[0] < boundaries.issuance_threshold < 0.15
    j = int(np.flatnonzero(grid.mu == boundaries.issuance_threshold)[0])
    assert not issuing[0, :j].any()


def test_issuance_keeps_value_positive_at_zero_cash(grid, proportional):
    value, policy, _, _ = proportional
    issuing = policy.iota[0] >= 0.5 * policy.K
    assert np.all(value[0, issuing] >= 0.0) and np.any(value[0, issuing] > 0.0)
    assert np.all(np.abs(value[0, ~issuing]) <= 1e-10)


def test_negative_cost_on_the_grid_is_rejected(model, grid):
    spec = IssuanceSpec(lambda_p=lambda mu: mu)
    with pytest.raises(ModelError, match="lambda_p"):
        solve_proportional_issuance(model, grid, spec)


# --------------------------
# Fixed-cost issuance
# --------------------------

@pytest.fixture(scope="module")
def fixed(model, grid):
    return solve_fixed_issuance(model, grid, IssuanceSpec(lambda_f=FIXED_COST))


def test_prohibitive_fixed_cost_reproduces_the_base_solve(model, grid, base_solution):
    spec = IssuanceSpec(lambda_f=LogisticCost.constant(1e6))
    value, policy, boundaries, _ = solve_fixed_issuance(model, grid, spec)
    np.testing.assert_allclose(value, base_solution[0], atol=1e-10)
    assert np.all(policy.target == -1)
    assert boundaries.issuance_threshold is None


def test_fixed_value_lies_between_base_and_proportional(base_solution, proportional, fixed):
    value = fixed[0]
    assert np.all(value >= base_solution[0] - 1e-8)
    assert np.all(value <= proportional[0] + 1e-6)


def test_nonlocal_constraint_holds_at_convergence(grid, fixed):
    value, policy, _, report = fixed
    assert report.converged
    prop, fixed_cost = IssuanceSpec(lambda_f=FIXED_COST).costs_on(grid)
    gain, _ = issuance_gain(value, grid, prop, fixed_cost)
    # the intervention arrives at rate K, so the constraint holds up to O(1/K)
    slack = (np.max(value) + 1.0) / policy.K
    assert np.max(gain[1:-1]) <= slack
    assert np.max(gain[0]) <= slack


def test_issuance_target_above_the_intervention(grid, fixed):
    _, policy, boundaries, _ = fixed
    active = policy.target >= 0
    assert active.any()
    rows = np.nonzero(active)[0]
    assert np.all(policy.target[active] > rows)
    targets = boundaries.issuance_target
    assert np.all(np.isnan(targets) == ~active.any(axis=0))
    assert np.all(targets[~np.isnan(targets)] > 0)
    assert "issuanceTarget" in boundaries.to_frame().columns


def test_moderate_costs_issue_only_from_zero_cash(grid, fixed):
    _, policy, boundaries, _ = fixed
    active = policy.target >= 0
    assert active[0].any()
    assert not active[1:].any()
    np.testing.assert_array_equal(np.isnan(boundaries.issuance_target), ~active[0])
    assert np.all(boundaries.issuance_target[active[0]] > 0)
    assert boundaries.issuance_threshold == pytest.approx(grid.mu[np.flatnonzero(active[0])[0]])


@pytest.fixture(scope="module")
def wave(model):
    """Fixed costs that make issuance worth it only just below the band in the low-mu columns.

    In a band column the rows under x-lower are liquidated, V = x, so the jump
    gain there is the gain at zero cash plus lambda_p x. A fixed cost between
    the two leaves row 0 idle while the rows next to x-lower issue. Columns
    with mu >= 1 get a cheap fixed cost and issue from zero cash; every other
    column gets a prohibitive one.
    """
    grid = build(GridSpec(x_max=4.0, mu_min=-3.0, mu_max=1.5, nx=201, nmu=46), model)
    base_value, base_policy, _ = policy_iteration(model, grid)
    band = extract_boundaries(base_policy, grid)
    prop = np.full(grid.nmu, 0.1)
    gain, _ = issuance_gain(base_value, grid, prop, np.zeros(grid.nmu))
    fixed_cost = np.full(grid.nmu, 10.0)
    detachable = np.zeros(grid.nmu, dtype=bool)
    for j in range(grid.nmu):
        if np.isnan(band.lower[j]):
            continue
        bottom = int(np.rint(band.lower[j] / grid.dx))
        if bottom < 2:
            continue
        at_zero = max(gain[0, j], 0.0)
        below_band = float(np.max(gain[1:bottom, j]))
        if below_band > at_zero:
            fixed_cost[j] = at_zero + 0.8 * (below_band - at_zero)
            detachable[j] = True
    fixed_cost[grid.mu >= 1.0 - 1e-9] = 0.06
    spec = IssuanceSpec(lambda_p=LogisticCost.constant(0.1),
                        lambda_f=lambda mu: np.interp(mu, grid.mu, fixed_cost))
    return grid, detachable, solve_fixed_issuance(model, grid, spec)


def test_high_fixed_costs_detach_issuance_from_zero_cash(wave):
    grid, detachable, (_, policy, boundaries, report) = wave
    assert detachable.any()
    assert report.converged
    active = policy.target >= 0
    rows = np.nonzero(active)[0]
    assert np.all(policy.target[active] > rows)
    detached = active[1:].any(axis=0) & ~active[0]
    assert detached.any()
    assert np.all(grid.mu[detached] < 1.0)
    attached = active[0]
    assert attached.any()
    assert np.all(grid.mu[attached] >= 1.0 - 1e-9)
    # the target curve breaks between the two issuance regions
    targets = boundaries.issuance_target
    last_detached = int(np.flatnonzero(detached)[-1])
    first_attached = int(np.flatnonzero(attached)[0])
    assert last_detached + 1 < first_attached
    assert np.all(np.isnan(targets[last_detached + 1:first_attached]))
    for j in np.flatnonzero(detached):
        assert targets[j] > grid.x[np.flatnonzero(active[:, j])[0]] > 0
    assert boundaries.issuance_threshold == pytest.approx(grid.mu[np.flatnonzero(active.any(axis=0))[0]])


def test_issuance_gain_picks_the_first_best_row(model):
    grid = build(GridSpec(x_max=4.0, mu_min=-1.0, mu_max=1.0, nx=5, nmu=3), model)
    value = np.tile(np.array([0.0, 2.0, 3.0, 4.0, 5.0])[:, None], (1, 3))
    prop = np.zeros(3)
    gain, target = issuance_gain(value, grid, prop, np.full(3, 0.5))
    # score V - x is 0, 1, 1, 1, 1: row 1 wins the tie
    assert target[0, 0] == 1
    assert gain[0, 0] == pytest.approx(0.5)
    assert target[-1, 0] == -1 and gain[-1, 0] == -np.inf


# --------------------------
# Credit line
# --------------------------

def test_degenerate_credit_line_reproduces_the_base_solve(model, grid, base_solution):
    value, policy, _, _ = solve_credit_line(model, grid, CreditLineSpec())
    np.testing.assert_array_equal(value, base_solution[0])
    np.testing.assert_array_equal(policy.ell, base_solution[1].ell)


@pytest.fixture(scope="module")
def credit_grid(model, grid):
    spec = CreditLineSpec(rho_minus=0.01, x_lower=-0.95)
    return build(spec.grid_spec(grid.spec), model)


def test_grid_extends_by_whole_cash_steps(grid, credit_grid):
    assert credit_grid.dx == pytest.approx(grid.dx)
    assert credit_grid.x[0] == pytest.approx(-1.0)
    np.testing.assert_allclose(credit_grid.x[8:], grid.x, atol=1e-12)


def test_ruin_rows_sit_on_or_above_the_credit_limit(credit_grid):
    rows = ruin_rows(credit_grid, CreditLineSpec(x_lower=-0.95))
    assert np.all(rows == 1)
    assert np.all(credit_grid.x[rows] >= -0.95)


def test_credit_limit_below_the_grid_is_rejected(grid):
    with pytest.raises(MaskConsistencyError, match="grid bottom"):
        ruin_rows(grid, CreditLineSpec(x_lower=-0.5))


def test_credit_line_lowers_the_dividend_barrier(model, grid, base_solution, credit_grid):
    value, policy, boundaries, report = solve_credit_line(model, credit_grid,
                                                          CreditLineSpec(rho_minus=0.01, x_lower=-0.95))
    assert report.converged
    assert np.all(value[0] == 0.0) and np.all(value[1] == 0.0)
    assert np.all(policy.ell[0] == 0.0)
    base = extract_boundaries(base_solution[1], grid)
    shared = ~np.isnan(base.upper) & ~np.isnan(boundaries.upper)
    inside = shared & (base.upper < grid.x[-1])
    assert inside.any()
    np.testing.assert_array_less(boundaries.upper[inside], base.upper[inside])
    assert np.all(boundaries.upper[shared] <= base.upper[shared] + 1e-12)


def test_credit_interest_has_a_small_effect(model, credit_grid):
    zero, *_ = solve_credit_line(model, credit_grid, CreditLineSpec(rho_minus=0.0, x_lower=-0.95))
    paid, *_ = solve_credit_line(model, credit_grid, CreditLineSpec(rho_minus=0.01, x_lower=-0.95))
    assert np.max(np.abs(paid - zero)) <= 0.01 * np.max(zero)
    assert np.all(paid <= zero + 1e-8)


def test_tabulated_credit_limit():
    spec = CreditLineSpec(x_lower=((-1.0, -0.5), (1.0, -1.0)))
    np.testing.assert_allclose(spec.x_lower_at(np.array([-2.0, 0.0, 2.0])), [-0.5, -0.75, -1.0])


@pytest.mark.parametrize(
    "kwargs",
    [{"x_lower": 0.5}, {"rho_minus": -0.01}, {"x_lower": ((0.0, -1.0),)}, {"x_lower": ((1.0, -1.0), (0.0, -1.0))}],
)
def test_invalid_credit_lines(kwargs):
    with pytest.raises(ModelError):
        CreditLineSpec(**kwargs)
