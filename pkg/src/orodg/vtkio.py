"""Legacy VTK output of nodal fields.

Each element is written as its (r+1)^d mapped GLL nodes plus r^d linear
sub-cells, which visualizers render as the usual high-order-subdivided
patchwork.  Points are duplicated between elements (this is DG data).
2D fields are embedded in the x-z plane.
"""

import numpy as np

from .errors import OrodgError
from .physics import FlowModel, conserved_to_primitive


def _subcell_connectivity(degree, dim):
    n1 = degree + 1
    cells = []
    if dim == 2:
        def nid(i, k):
            return i * n1 + k
        for i in range(degree):
            for k in range(degree):
                cells.append((nid(i, k), nid(i + 1, k),
                              nid(i + 1, k + 1), nid(i, k + 1)))
        return np.array(cells, dtype=np.int64), 9       # VTK_QUAD
    def nid(i, j, k):
        return (i * n1 + j) * n1 + k
    for i in range(degree):
        for j in range(degree):
            for k in range(degree):
                cells.append((nid(i, j, k), nid(i + 1, j, k),
                              nid(i + 1, j + 1, k), nid(i, j + 1, k),
                              nid(i, j, k + 1), nid(i + 1, j, k + 1),
                              nid(i + 1, j + 1, k + 1), nid(i, j + 1, k + 1)))
    return np.array(cells, dtype=np.int64), 12          # VTK_HEXAHEDRON


def write_field_vtk(field, geometry, path, model=None, time_value=0.0):
    """Write a snapshot as a legacy ASCII VTK unstructured grid with the
    primitive variables as point data."""
    model = model or FlowModel.dimensional()
    mesh = geometry.mesh
    d = mesh.dim
    degree = geometry.basis.degree
    coords = geometry.node_coords            # (n_el, nn, d)
    n_el, nn, _ = coords.shape
    cells, ctype = _subcell_connectivity(degree, d)
    npts = n_el * nn
    W = conserved_to_primitive(field.data, model, var_axis=1, check=False)

    try:
        f = open(path, "w")
    except OSError as err:
        raise OrodgError(f"cannot write VTK file {path}: {err}") from err
    with f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"orodg snapshot t={time_value!r}\n")
        f.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {npts} double\n")
        pts3 = np.zeros((n_el, nn, 3))
        if d == 2:
            pts3[:, :, 0] = coords[:, :, 0]
            pts3[:, :, 2] = coords[:, :, 1]
        else:
            pts3[:] = coords
        np.savetxt(f, pts3.reshape(-1, 3), fmt="%.17g")
        ncell = n_el * len(cells)
        per = cells.shape[1]
        f.write(f"CELLS {ncell} {ncell * (per + 1)}\n")
        offs = (np.arange(n_el) * nn)[:, None, None]
        conn = (cells[None, :, :] + offs).reshape(-1, per)
        np.savetxt(f, np.column_stack([np.full(len(conn), per), conn]),
                   fmt="%d")
        f.write(f"CELL_TYPES {ncell}\n")
        np.savetxt(f, np.full(ncell, ctype, dtype=np.int64), fmt="%d")
        f.write(f"POINT_DATA {npts}\n")
        for name, arr in (("rho", W.rho), ("p", W.p), ("T", W.T),
                          ("w", W.u[d - 1])):
            f.write(f"SCALARS {name} double\nLOOKUP_TABLE default\n")
            np.savetxt(f, arr.reshape(-1, 1), fmt="%.17g")
        f.write("VECTORS velocity double\n")
        vel3 = np.zeros((n_el, nn, 3))
        if d == 2:
            vel3[:, :, 0] = W.u[0]
            vel3[:, :, 2] = W.u[1]
        else:
            vel3[:] = np.moveaxis(W.u, 0, 2)
        np.savetxt(f, vel3.reshape(-1, 3), fmt="%.17g")
    return path


def read_vtk_points(path):
    """Coordinates back from a legacy VTK file (test oracle for roundtrips)."""
    with open(path) as f:
        lines = f.readlines()
    for i, ln in enumerate(lines):
        if ln.startswith("POINTS"):
            n = int(ln.split()[1])
            flat = []
            j = i + 1
            while len(flat) < 3 * n:
                flat.extend(float(v) for v in lines[j].split())
                j += 1
            return np.array(flat).reshape(n, 3)
    raise OrodgError(f"no POINTS section in {path}")
