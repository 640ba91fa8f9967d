import numpy as np
import pytest

from colombeau.embeddings import gallery
from colombeau.net_core import CompactBox, default_grid


@pytest.fixture(scope="session")
def grid():
    return default_grid()


@pytest.fixture(scope="session")
def gal(grid):
    return gallery(grid)


@pytest.fixture(scope="session")
def K1():
    return CompactBox.cube(1.0, 1)


@pytest.fixture(scope="session")
def K2():
    return CompactBox.cube(1.0, 2)


@pytest.fixture(scope="session")
def K3():
    return CompactBox.cube(1.0, 3)


@pytest.fixture(scope="session")
def annulus():
    return CompactBox(((0.5, 1.0), (-1.0, 1.0)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
