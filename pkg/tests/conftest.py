import numpy as np
import pytest

from llgpc.fem import build_assemblies
from llgpc.mesh import build_cube_mesh, make_mesh

REFERENCE_TET_VERTICES = np.array([
    [0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
])


@pytest.fixture(scope="session")
def reference_tet():
    return make_mesh(REFERENCE_TET_VERTICES, np.array([[0, 1, 2, 3]]))


@pytest.fixture(scope="session")
def reference_tet_asm(reference_tet):
    return build_assemblies(reference_tet)


@pytest.fixture(scope="session")
def cube1_asm():
    return build_assemblies(build_cube_mesh(1, 1.0))


@pytest.fixture(scope="session")
def cube2_asm():
    return build_assemblies(build_cube_mesh(2, 1.0))


@pytest.fixture(scope="session")
def cube4_asm():
    return build_assemblies(build_cube_mesh(4, 1.0))


def random_unit_field(n, seed):
    rng = np.random.Generator(np.random.Philox(seed))
    g = rng.normal(size=(n, 3))
    return g / np.linalg.norm(g, axis=1)[:, None]
