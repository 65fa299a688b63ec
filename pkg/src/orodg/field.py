"""Nodal solution fields on a mesh."""

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .physics import n_variables


@dataclass
class StateField:
    """Per-leaf nodal coefficients, layout (n_el, n_var, (r+1)^d)."""

    data: np.ndarray
    mesh_id: str
    degree: int

    def copy(self):
        return StateField(self.data.copy(), self.mesh_id, self.degree)

    @property
    def n_elements(self):
        return self.data.shape[0]

    @property
    def n_var(self):
        return self.data.shape[1]

    def check_compatible(self, other):
        if self.mesh_id != other.mesh_id or self.degree != other.degree:
            raise UsageError("fields live on different meshes or degrees")


def allocate_field(geometry, n_var=None):
    mesh = geometry.mesh
    nv = n_var if n_var is not None else n_variables(mesh.dim)
    data = np.zeros((mesh.n_leaves, nv, geometry.basis.n_nodes))
    return StateField(data, mesh.fingerprint, geometry.basis.degree)


def project_initial_data(geometry, f, n_var=None):
    """Nodal interpolation of the pointwise state function f(coords)->state.

    f maps an (..., d) coordinate array to (..., n_var) values.  Nodal GLL
    interpolation is used in place of an exact L2 projection; both converge
    at the same rate and interpolation keeps the data path trivial.
    """
    field = allocate_field(geometry, n_var)
    vals = np.asarray(f(geometry.node_coords), dtype=float)
    if vals.shape != geometry.node_coords.shape[:2] + (field.n_var,):
        raise UsageError(
            f"initial-state function returned shape {vals.shape}, expected "
            f"{geometry.node_coords.shape[:2] + (field.n_var,)}")
    if not np.all(np.isfinite(vals)):
        bad = np.argwhere(~np.isfinite(vals))[0]
        raise UsageError(
            f"initial state non-finite at element {bad[0]}, node {bad[1]}, "
            f"variable {bad[2]} (x={geometry.node_coords[bad[0], bad[1]]})")
    field.data[...] = np.moveaxis(vals, 2, 1)
    return field
