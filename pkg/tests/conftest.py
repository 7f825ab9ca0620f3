import numpy as np
import pytest

from hifusim import materials, mesh


@pytest.fixture(scope="session")
def unit_square():
    return mesh.build_rectangle_mesh(0.0, 1.0, 0.0, 1.0, 6, 6)


@pytest.fixture(scope="session")
def wide_rect():
    return mesh.build_rectangle_mesh(-1.0, 1.0, 0.0, 1.0, 7, 5)


@pytest.fixture(scope="session")
def crossed_rect():
    return mesh.build_rectangle_mesh(-1.0, 1.0, 0.0, 1.0, 8, 4,
                                     pattern="crossed")


@pytest.fixture(scope="session")
def coarse_domain():
    return mesh.build_domain_mesh(0.01)


@pytest.fixture(scope="session")
def medium_domain():
    return mesh.build_domain_mesh(0.006)


@pytest.fixture(scope="session")
def liver():
    return materials.liver_model(1e5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
