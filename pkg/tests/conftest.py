import numpy as np
import pytest

from ieskit.fhn import FhnParams, build_fc


@pytest.fixture(scope="session")
def default_params() -> FhnParams:
    """Well-conditioned parameter set used across the certification tests."""
    return FhnParams(b=1.0, rho1=1.0, rho2=1.0, epsilon=0.9, r=2.1, alpha=1.0)


@pytest.fixture(scope="session")
def default_table(default_params):
    return build_fc(default_params)


@pytest.fixture(scope="session")
def fig_pair():
    return np.array([2.0, 0.0]), np.array([-2.0, 1.0])
