import numpy as np
import pytest

from amwg import GaussianPrior, ObservationModel, every_other, linear_flow, lorenz96, sample_store
from amwg.prior import lorenz96_equilibrium_prior


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def l96_prior():
    """A short-run equilibrium prior on 40 components; enough for integration tests."""
    model = lorenz96(40, 2)
    return lorenz96_equilibrium_prior(model, sim_length=200.0, rng=np.random.default_rng(7))


@pytest.fixture(scope="session")
def linear_problem():
    model = linear_flow(20, 2)
    prior = GaussianPrior.standard(20, 2)
    H = every_other(20)
    obs = ObservationModel(H, 0.01 * np.eye(10), np.zeros(10))
    store = sample_store(3, 10, model.m, model.b, 40)
    return model, prior, obs, store


def pytest_terminal_summary(terminalreporter):
    from helpers import CRITERIA

    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
