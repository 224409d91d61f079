import numpy as np
import pytest

from eggrid import fixtures


@pytest.fixture(scope="session")
def flat21():
    return fixtures.flat_patch(21, 21)


@pytest.fixture(scope="session")
def sphere3():
    return fixtures.icosphere(3)


@pytest.fixture(scope="session")
def sphere4():
    return fixtures.icosphere(4)


@pytest.fixture(scope="session")
def cylinder():
    return fixtures.cylinder_band(64, 17)


@pytest.fixture(scope="session")
def bump():
    return fixtures.gaussian_bump(31, 31)


@pytest.fixture(scope="session")
def saddle_mesh():
    return fixtures.saddle(31, 31)
