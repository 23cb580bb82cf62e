import numpy as np
import pytest

from remec import default_params, deployment_params


@pytest.fixture(scope="session")
def params():
    return default_params()


@pytest.fixture(scope="session")
def dep_params():
    return deployment_params()


@pytest.fixture()
def rng():
    return np.random.default_rng(20230817)


def random_state(rng, phi_range=np.deg2rad(95.0)):
    """Random reduced state with joint angles inside the travel range."""
    x = np.empty(5)
    x[:2] = rng.uniform(-2.0, 2.0, 2)
    x[2] = rng.uniform(-np.pi, np.pi)
    x[3:5] = rng.uniform(-phi_range, phi_range, 2)
    xdot = rng.uniform(-1.0, 1.0, 5)
    return x, xdot
