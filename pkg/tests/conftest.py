import numpy as np
import pytest

from meshanim.mesh import TriangleMesh
from meshanim.synth import icosphere


@pytest.fixture
def tetra():
    v = np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    )
    f = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return TriangleMesh(v, f)


@pytest.fixture
def fan():
    """Closed fan: center 0 with ring 1..5, counterclockwise faces."""
    angles = 2 * np.pi * np.arange(5) / 5
    v = np.concatenate(
        [[[0, 0, 0.2]], np.stack([np.cos(angles), np.sin(angles), np.zeros(5)], 1)]
    )
    f = np.array([[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 5], [0, 5, 1]])
    return TriangleMesh(v, f)


@pytest.fixture(scope="session")
def ico1():
    return icosphere(1, 100.0)


@pytest.fixture(scope="session")
def ico2():
    return icosphere(2, 100.0)
