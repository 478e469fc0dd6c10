import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dividend_optimizer.errors import MonotonicityViolation
from dividend_optimizer.grid import GridSpec, build
from dividend_optimizer.operator import GeneratorScheme, assemble, monotone_rows, mu_rates
from dividend_optimizer.solver import PolicyField

from conftest import ou_model

K = 400.0


def live_values(scheme, field):
    return field[scheme.live]


def test_constant_field_gives_discount_rate(model, grid):
    scheme = GeneratorScheme(model, grid)
    op = scheme.assemble(np.zeros(grid.shape))
    out = op.apply(np.ones(grid.shape))
    np.testing.assert_allclose(live_values(scheme, out), model.r, rtol=0, atol=1e-10)


def test_linear_field_is_differenced_exactly(model, grid):
    scheme = GeneratorScheme(model, grid)
    X, MU = grid.mesh
    out = scheme.assemble(np.zeros(grid.shape)).apply(X)
    expected = model.r * X - MU
    np.testing.assert_allclose(live_values(scheme, out), live_values(scheme, expected), atol=1e-9)


def test_quadratic_field_matches_hand_expansion(model, grid):
    scheme = GeneratorScheme(model, grid)
    X, MU = grid.mesh
    out = scheme.assemble(np.zeros(grid.shape)).apply(X**2)
    expected = model.r * X**2 - 2.0 * MU * X - model.sigma**2 - np.abs(MU) * grid.dx
    np.testing.assert_allclose(live_values(scheme, out), live_values(scheme, expected), atol=1e-8)


def test_linear_field_with_cross_term():
    model = ou_model(rho=0.3)
    grid = build(GridSpec(x_max=5.0, mu_min=-2.0, mu_max=2.0, nx=51, nmu=41), model)
    scheme = GeneratorScheme(model, grid)
    X, MU = grid.mesh
    out = scheme.assemble(np.zeros(grid.shape)).apply(X)
    np.testing.assert_allclose(live_values(scheme, out), live_values(scheme, model.r * X - MU), atol=1e-9)


def test_dividend_rate_enters_as_backward_difference(model, grid):
    scheme = GeneratorScheme(model, grid)
    X, _ = grid.mesh
    ell = np.full(grid.shape, K)
    op = scheme.assemble(ell)
    # V = x: ell * (D-V - 1) vanishes
    np.testing.assert_allclose(live_values(scheme, op.residual(X)),
                               live_values(scheme, model.r * X - grid.mesh[1]), atol=1e-8)


def test_no_cross_entries_without_correlation(model, grid):
    scheme = GeneratorScheme(model, grid)
    for name in ("diag_pp", "diag_mm", "diag_pm", "diag_mp"):
        assert not np.any(scheme.rates[name])
    op = scheme.assemble(np.zeros(grid.shape))
    assert len(op.row(grid.index(10, 30))) == 5


def test_cross_term_uses_seven_points():
    model = ou_model(rho=0.3)
    grid = build(GridSpec(x_max=5.0, mu_min=-2.0, mu_max=2.0, nx=51, nmu=41), model)
    op = GeneratorScheme(model, grid).assemble(np.zeros(grid.shape))
    assert len(op.row(grid.index(10, 20))) == 7


def test_cross_condition_holds_with_equality():
    model = ou_model(rho=1.0, sigma=0.1, sigma_tilde=0.1)
    grid = build(GridSpec(x_max=5.0, mu_min=-2.0, mu_max=2.0, nx=51, nmu=41), model)
    assert grid.dx == grid.dmu
    op = GeneratorScheme(model, grid).assemble(np.zeros(grid.shape))
    assert monotone_rows(op, model.r).all()


def test_cross_condition_violation_reports_the_ratio(grid):
    model = ou_model(rho=0.5)
    with pytest.raises(MonotonicityViolation, match="dx/dmu") as info:
        GeneratorScheme(model, grid)
    lo, hi = info.value.required_ratio
    assert lo == pytest.approx(0.015 / 0.09)
    assert hi == pytest.approx(0.01 / 0.015)
    assert not lo <= grid.dx / grid.dmu <= hi
    i, j = info.value.node
    assert 0 < i < grid.nx - 1 and 0 < j < grid.nmu - 1


def test_boundary_rows(model, grid):
    scheme = GeneratorScheme(model, grid)
    op = scheme.assemble(np.full(grid.shape, K))
    assert op.row(grid.index(0, 7)) == {grid.index(0, 7): 1.0}
    assert op.rhs.reshape(grid.shape)[0, 7] == 0.0
    top = op.row(grid.index(grid.nx - 1, 7))
    assert set(top) == {grid.index(grid.nx - 1, 7), grid.index(grid.nx - 2, 7)}
    assert top[grid.index(grid.nx - 1, 7)] == pytest.approx(model.r + K / grid.dx)


def test_mu_edges_have_zero_flux(model, grid):
    up, down = mu_rates(model, grid.mu, grid.dmu)
    assert up[-1] == 0.0 and down[0] == 0.0
    assert np.all(up[:-1] > 0) and np.all(down[1:] > 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_every_row_is_monotone(seed):
    model = ou_model(rho=0.3)
    grid = build(GridSpec(x_max=5.0, mu_min=-2.0, mu_max=2.0, nx=21, nmu=21), model)
    ell = np.random.default_rng(seed).uniform(0.0, K, grid.shape)
    op = GeneratorScheme(model, grid).assemble(ell)
    assert monotone_rows(op, model.r).all()


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_residual_is_nondecreasing_in_the_dividend_rate(seed):
    model = ou_model()
    grid = build(GridSpec(x_max=5.0, mu_min=-2.0, mu_max=2.0, nx=21, nmu=21), model)
    rng = np.random.default_rng(seed)
    low = rng.uniform(0.0, K, grid.shape)
    high = np.minimum(low + rng.uniform(0.0, K, grid.shape), K)
    X, MU = grid.mesh
    field = 2.0 * X + MU**2          # backward gradient 2 >= 1
    scheme = GeneratorScheme(model, grid)
    gap = scheme.assemble(high).residual(field) - scheme.assemble(low).residual(field)
    assert np.all(gap >= -1e-9)


def test_module_assemble_validates_the_policy(model, grid):
    bad = PolicyField(ell=np.zeros((3, 3)), K=K)
    with pytest.raises(ValueError, match="shape"):
        assemble(model, grid, bad, K)
    too_fast = PolicyField(ell=np.full(grid.shape, K), K=K)
    with pytest.raises(ValueError, match="outside"):
        assemble(model, grid, too_fast, K / 2)
    op = assemble(model, grid, PolicyField.zeros(grid, K), K)
    assert op.matrix.shape == (grid.size, grid.size)
