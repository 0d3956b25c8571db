import numpy as np
import pytest

from isolattice import discrete as D
from isolattice import lattice as L
from isolattice import smooth as S
from isolattice import transforms as T


def lift_coords(p):
    """Raw light-cone lift coordinates of a chart point (test oracle form)."""
    p = np.asarray(p, dtype=float)
    s = float(p @ p)
    return np.array([p[0], p[1], p[2], (1.0 - s) / 2.0, (1.0 + s) / 2.0])


@pytest.fixture(scope="session")
def cylinder_inward():
    return S.cylinder()


@pytest.fixture(scope="session")
def connection_inward(cylinder_inward):
    return S.connection_family(cylinder_inward)


@pytest.fixture(scope="session")
def cq_inward(cylinder_inward):
    return T.cmc_linear_cq(cylinder_inward, 0.5, T.SpaceFormVector.euclidean())


@pytest.fixture(scope="session")
def small_lattice():
    """Outward cylinder, 2x2 lattice over a 7x7 grid (shared positive case)."""
    surface = S.cylinder(orientation="outward")
    quantity = T.cmc_linear_cq(surface, -0.5, T.SpaceFormVector.euclidean())
    connection = S.connection_family(surface)
    grid = S.SampleGrid.regular((-1, 1), (-1, 1), 7, 7)
    params = L.EdgeParams(a=(0.8, 1.4), b=(2.0, 2.6))
    return L.build_lattice(connection, quantity, params, grid, seed=11)


@pytest.fixture(scope="session")
def small_net(small_lattice):
    return L.extract_discrete(small_lattice, small_lattice.grid.center_index)


@pytest.fixture(scope="session")
def negative_lattice():
    """Same construction with deliberately non-Bäcklund leg seeds."""
    surface = S.cylinder(orientation="outward")
    quantity = T.cmc_linear_cq(surface, -0.5, T.SpaceFormVector.euclidean())
    connection = S.connection_family(surface)
    grid = S.SampleGrid.regular((-1, 1), (-1, 1), 7, 7)
    params = L.EdgeParams(a=(0.8, 1.4), b=(2.0, 2.6))
    return L.build_lattice(connection, quantity, params, grid, seed=11,
                           non_backlund=True)


@pytest.fixture(scope="session")
def negative_net(negative_lattice):
    return L.extract_discrete(negative_lattice, negative_lattice.grid.center_index)
