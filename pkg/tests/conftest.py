import numpy as np
import pytest

from malab.geometry import BallGrid, make_flat_model


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def flat_m1():
    """Flat model at m=1 (n=2), res 16."""
    return make_flat_model(1, 16)


@pytest.fixture(scope="session")
def flat_m1_small():
    return make_flat_model(1, 8)


@pytest.fixture(scope="session")
def flat_m2_small():
    """Flat model at m=2 (n=4), res 4 -- the cheap anisotropic case."""
    return make_flat_model(2, 4)


@pytest.fixture(scope="session")
def ball_n2():
    return BallGrid(n=2, center=np.zeros(4), radius=0.5, res=13)
