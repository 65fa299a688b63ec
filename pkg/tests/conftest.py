import os

# single-threaded BLAS: worker threads own the parallelism, and determinism
# checks assume serial kernels underneath
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np
import pytest

from orodg.boundary import BoundaryCondition
from orodg.field import allocate_field
from orodg.geometry import build_geometry
from orodg.mesh import build_uniform_mesh, refine_region


def hill2d(x):
    return 400.0 / (1.0 + ((x - 30.0e3) / 1.0e3) ** 2) ** 1.5


def hill3d(x, y):
    return 400.0 / (1.0 + ((x - 10.0e3) / 1.0e3) ** 2
                    + ((y - 10.0e3) / 1.0e3) ** 2) ** 1.5


def constant_state_data(geometry, rho=1.2, u=(10.0, 3.0, 2.0), p=1.0e5,
                        gamma=1.4):
    f = allocate_field(geometry)
    d = geometry.mesh.dim
    uv = np.asarray(u[:d])
    f.data[:, 0] = rho
    for a in range(d):
        f.data[:, 1 + a] = rho * uv[a]
    f.data[:, 1 + d] = p / (gamma - 1.0) + 0.5 * rho * (uv ** 2).sum()
    return f


def constant_farfield_bcs(mesh, geometry, state_column):
    bcs = []
    for b in mesh.topology.boundary:
        g = np.empty((len(b.leaves), len(state_column), geometry.basis.n_face_quad))
        g[:] = np.asarray(state_column)[None, :, None]
        bcs.append(BoundaryCondition("farfield", g))
    return bcs


@pytest.fixture(scope="session")
def hill_hanging_mesh_2d():
    m = build_uniform_mesh((60.0e3, 16.0e3), (15, 4))
    return refine_region(
        m, lambda lf: abs(lf.center[0] - 30.0e3) < 6.0e3 and lf.center[1] < 6.0e3,
        times=2)


@pytest.fixture(scope="session")
def hill_hanging_geo_2d(hill_hanging_mesh_2d):
    return build_geometry(hill_hanging_mesh_2d, 4, terrain=hill2d)


@pytest.fixture(scope="session")
def hill_hanging_mesh_3d():
    m = build_uniform_mesh((20.0e3, 20.0e3, 10.0e3), (4, 4, 2))
    return refine_region(
        m, lambda lf: bool(np.all(np.abs(lf.center[:2] - 10.0e3) < 5.0e3)
                           and lf.center[2] < 5.0e3), times=1)


@pytest.fixture(scope="session")
def hill_hanging_geo_3d(hill_hanging_mesh_3d):
    return build_geometry(hill_hanging_mesh_3d, 3, terrain=hill3d)
