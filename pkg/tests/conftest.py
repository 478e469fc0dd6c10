import pytest

from dividend_optimizer.grid import GridSpec, build
from dividend_optimizer.model import ModelParams, OrnsteinUhlenbeck
from dividend_optimizer.solver import policy_iteration

# baseline parameter set
R, SIGMA, K_MEAN, MU_BAR, SIGMA_TILDE = 0.05, 0.1, 0.5, 0.15, 0.3


def ou_model(r=R, sigma=SIGMA, rho=0.0, k=K_MEAN, mu_bar=MU_BAR, sigma_tilde=SIGMA_TILDE) -> ModelParams:
    return ModelParams(r=r, sigma=sigma, rho=rho, drift=OrnsteinUhlenbeck(k=k, mu_bar=mu_bar, sigma_tilde=sigma_tilde))


# coarse grid reaching well below the liquidation threshold
SMALL_SPEC = GridSpec(x_max=5.0, mu_min=-4.0, mu_max=2.0, nx=41, nmu=61)


@pytest.fixture(scope="session")
def model():
    return ou_model()


@pytest.fixture(scope="session")
def grid(model):
    return build(SMALL_SPEC, model)


@pytest.fixture(scope="session")
def base_solution(model, grid):
    """(value, policy, report) of the base problem on the coarse grid."""
    return policy_iteration(model, grid)
