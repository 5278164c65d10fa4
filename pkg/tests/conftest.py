import numpy as np
import pytest

from goafem.mesh import Mesh, build_cross_mesh, build_square_mesh
from goafem.problems import SQUARE_GOAL


def two_triangles():
    """Unit square split along its diagonal."""
    v = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return Mesh.from_arrays(v, [[0, 1, 2], [0, 2, 3]])


def unit_triangle():
    return Mesh.from_arrays([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


@pytest.fixture(scope="session")
def cross_mesh():
    return build_cross_mesh()


@pytest.fixture(scope="session")
def coarse_cross():
    return build_cross_mesh(0.5)


@pytest.fixture(scope="session")
def square_mesh():
    return build_square_mesh(1, SQUARE_GOAL)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
