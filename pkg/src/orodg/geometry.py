"""Terrain-following element geometry and metric terms.

The map takes the reference cube [0,1]^d to a box element and lifts it
vertically with the decaying Gal-Chen rule

    z_phys = z_ref + h(x[,y]) * (1 - z_ref / z_top).

h here is not the raw height function but a piecewise-polynomial surface:
the height is interpolated once, at tensor GLL nodes of the geometric
degree, on each ROOT column of the mesh.  Every leaf (whatever its
refinement level) evaluates that same global surface exactly as a
polynomial.  Two consequences the solver relies on:

  * the discrete geometry is watertight: both sides of any face, hanging or
    conforming, see the identical face surface, so mortar coupling and
    free-stream preservation hold to rounding error;
  * all metric terms are exact polynomial evaluations of tensor degree
    <= (g, g, 1), so the Gauss rule with r+1 points per axis integrates the
    constant-state residual exactly for g <= r+1.

Horizontal coordinates stay affine, hence det(J) does not depend on the
vertical reference coordinate and the element mass matrix factorizes into a
per-element horizontal block times one shared vertical 1D mass matrix.
"""

from dataclasses import dataclass

import numpy as np

from .basis import (gauss_lobatto, lagrange_diff_matrix, lagrange_eval_matrix,
                    make_basis)
from .errors import ConfigurationError, GeometryError


class TerrainSurface:
    """Polynomial terrain height sampled per root column."""

    def __init__(self, height_fn, extents, root_counts, degree):
        self.degree = int(degree)
        self.extents = tuple(extents)
        self.root_counts = tuple(root_counts)
        hd = len(root_counts) - 1
        self.hd = hd
        self.nodes = gauss_lobatto(self.degree + 1)
        self.col_dx = np.array([extents[a] / root_counts[a] for a in range(hd)])
        nodes = self.nodes
        if hd == 1:
            x = (np.arange(root_counts[0])[:, None] + nodes[None, :]) * self.col_dx[0]
            self.values = np.asarray(height_fn(x), dtype=float)
        else:
            x = ((np.arange(root_counts[0])[:, None, None, None] + nodes[None, None, :, None])
                 * self.col_dx[0])
            y = ((np.arange(root_counts[1])[None, :, None, None] + nodes[None, None, None, :])
                 * self.col_dx[1])
            x, y = np.broadcast_arrays(x, y)
            self.values = np.asarray(height_fn(x, y), dtype=float)
        z_top = extents[-1]
        if np.any(self.values >= z_top):
            raise ConfigurationError(
                f"terrain height reaches z_top={z_top}: max {self.values.max()}")
        if np.any(self.values < 0):
            raise ConfigurationError("terrain height must be >= 0")


class _SurfaceEvaluator:
    """Evaluates the terrain polynomial and its physical gradient at tensor
    point sets on every leaf, batching leaves by their position inside the
    root column so each distinct 1D basis matrix is built once."""

    def __init__(self, surface, mesh, pointsets):
        self.surface = surface
        self.mesh = mesh
        self.hd = mesh.dim - 1
        self.pointsets = {k: np.asarray(v, dtype=float) for k, v in pointsets.items()}
        self.zero = surface is None
        levels = np.array([lv for lv, _ in mesh.leaves], dtype=np.int64)
        origins = np.array([org for _, org in mesh.leaves], dtype=np.int64)
        self.levels = levels
        if self.zero:
            return
        self.cols = [origins[:, a] >> levels for a in range(self.hd)]
        key_index = {}
        self.key_id = np.empty((self.hd, mesh.n_leaves), dtype=np.int64)
        for a in range(self.hd):
            orgs = origins[:, a] - (self.cols[a] << levels)
            for i in range(mesh.n_leaves):
                k = (int(levels[i]), int(orgs[i]))
                if k not in key_index:
                    key_index[k] = len(key_index)
                self.key_id[a, i] = key_index[k]
        g_nodes = surface.nodes
        self.mats = {}
        for name, pts in self.pointsets.items():
            val = np.empty((len(key_index), len(pts), len(g_nodes)))
            der = np.empty_like(val)
            for (lv, og), kid in key_index.items():
                scale = 1.0 / (1 << lv)
                local = (og + pts) * scale
                val[kid] = lagrange_eval_matrix(g_nodes, local)
                # derivative is w.r.t. the column-local coordinate; dividing
                # by the column width in eval() then gives d/dx_phys
                der[kid] = lagrange_diff_matrix(g_nodes, local)
            self.mats[name] = (val, der)

    def eval(self, set_per_axis, deriv=False):
        """Terrain height (n_el, n_pts) at the tensor grid of the named 1D
        point sets (C-ordered over horizontal axes); with deriv=True also the
        physical gradient (n_el, n_pts, hd)."""
        sizes = [len(self.pointsets[name]) for name in set_per_axis]
        npts = int(np.prod(sizes))
        n_el = self.mesh.n_leaves
        if self.zero:
            h = np.zeros((n_el, npts))
            return (h, np.zeros((n_el, npts, self.hd))) if deriv else h
        if self.hd == 1:
            V = self.surface.values[self.cols[0]]
            Lv, Ld = self.mats[set_per_axis[0]]
            h = np.einsum('epj,ej->ep', Lv[self.key_id[0]], V)
            if not deriv:
                return h
            dh = np.einsum('epj,ej->ep', Ld[self.key_id[0]], V) / self.surface.col_dx[0]
            return h, dh[..., None]
        V = self.surface.values[self.cols[0], self.cols[1]]
        Lvx, Ldx = self.mats[set_per_axis[0]]
        Lvy, Ldy = self.mats[set_per_axis[1]]
        kx, ky = self.key_id[0], self.key_id[1]
        h = np.einsum('epj,eqk,ejk->epq', Lvx[kx], Lvy[ky], V)
        if not deriv:
            return h.reshape(n_el, npts)
        dhx = np.einsum('epj,eqk,ejk->epq', Ldx[kx], Lvy[ky], V) / self.surface.col_dx[0]
        dhy = np.einsum('epj,eqk,ejk->epq', Lvx[kx], Ldy[ky], V) / self.surface.col_dx[1]
        dh = np.stack([dhx.reshape(n_el, npts), dhy.reshape(n_el, npts)], axis=-1)
        return h.reshape(n_el, npts), dh


@dataclass(frozen=True)
class FaceGeometry:
    """Metric data for one face batch, at face quadrature points.

    normal is the unit normal oriented from the minus-side element to the
    plus side (outward for boundary batches); ws is quadrature weight times
    surface Jacobian.
    """

    normal: np.ndarray   # (n_faces, n_face_quad, d)
    ws: np.ndarray       # (n_faces, n_face_quad)


class ElementGeometry:
    """Per-element view into the mesh geometry (mainly for inspection)."""

    def __init__(self, geom, index):
        self.index = index
        self.node_coords = geom.node_coords[index]
        self.jacobian_det = geom.det_j[index]
        self.adjugate = geom.ctrv[index]
        self.corners = geom.corners[index]
        self.diameter = geom.diameter[index]

    def jacobian(self, q):
        """Full Jacobian matrix at volume quadrature point q (adj relation
        J = det * adj^{-1})."""
        adj = self.adjugate[q]
        return self.jacobian_det[q] * np.linalg.inv(adj).T


class MeshGeometry:
    """All metric terms of a (possibly terrain-mapped) forest mesh at the
    quadrature points of the solution basis."""

    def __init__(self, mesh, basis, surface, geom_degree):
        self.mesh = mesh
        self.basis = basis
        self.surface = surface
        self.geom_degree = geom_degree
        d = mesh.dim
        hd = d - 1
        r = basis.degree
        zt = mesh.extents[-1]
        self.z_top = zt

        pointsets = {
            "q": basis.quad_x,
            "n": basis.nodes_1d,
            "c": np.array([0.0, 1.0]),
            "e0": np.array([0.0]),
            "e1": np.array([1.0]),
        }
        ev = _SurfaceEvaluator(surface, mesh, pointsets)
        self._ev = ev

        levels = ev.levels
        origins = np.array([org for _, org in mesh.leaves], dtype=np.int64)
        counts = np.array(mesh.root_counts, dtype=np.int64)
        self.sizes = np.array([e / c for e, c in zip(mesh.extents, counts)]) \
            / (1 << levels)[:, None]          # (n_el, d)
        self.lo = self.sizes * origins.astype(float)

        n_el = mesh.n_leaves
        nq1 = basis.n_quad_1d
        nqh = nq1 ** hd
        qx, qw = basis.quad_x, basis.quad_w

        # --- volume metric --------------------------------------------------
        hq, dhq = ev.eval(("q",) * hd, deriv=True)      # (n_el,nqh), (n_el,nqh,hd)
        zb = self.lo[:, -1:] + self.sizes[:, -1:] * qx[None, :]   # (n_el, nq1)
        decay = 1.0 - zb / zt
        one_m_h = 1.0 - hq / zt                          # (n_el, nqh)
        dz = self.sizes[:, -1]
        zz = dz[:, None, None] * one_m_h[:, :, None] * np.ones((1, 1, nq1))
        zgrad = (dhq[:, :, None, :] * self.sizes[:, None, None, :hd]
                 * decay[:, None, :, None])              # (n_el,nqh,nq1,hd)

        det = np.ones((n_el, nqh, nq1))
        for a in range(hd):
            det *= self.sizes[:, a][:, None, None]
        det = det * zz
        ctrv = np.zeros((n_el, nqh, nq1, d, d))
        if d == 2:
            dx = self.sizes[:, 0][:, None, None]
            ctrv[..., 0, 0] = zz
            ctrv[..., 1, 0] = -zgrad[..., 0]
            ctrv[..., 1, 1] = dx
        else:
            dx = self.sizes[:, 0][:, None, None]
            dy = self.sizes[:, 1][:, None, None]
            ctrv[..., 0, 0] = dy * zz
            ctrv[..., 1, 1] = dx * zz
            ctrv[..., 2, 0] = -dy * zgrad[..., 0]
            ctrv[..., 2, 1] = -dx * zgrad[..., 1]
            ctrv[..., 2, 2] = dx * dy
        self.det_j = det.reshape(n_el, basis.n_quad)
        self.ctrv = ctrv.reshape(n_el, basis.n_quad, d, d)
        if self.det_j.min() <= 0.0:
            bad = np.unravel_index(np.argmin(self.det_j), self.det_j.shape)
            raise GeometryError(
                f"non-positive Jacobian in element {bad[0]} "
                f"(det={self.det_j[bad]:.3e})")

        # --- factorized mass matrix -----------------------------------------
        B1 = basis.interp_1d
        Bh = B1
        wh = qw
        for _ in range(hd - 1):
            Bh = np.kron(Bh, B1)
            wh = np.kron(wh, qw)
        prof = det[:, :, 0]                              # det_j is z-independent
        mass_h = np.einsum('qi,eq,qj->eij', Bh, wh[None, :] * prof, Bh)
        self.mass_h_inv = np.linalg.inv(mass_h)
        mass_v = B1.T @ (qw[:, None] * B1)
        self.mass_v_inv = np.linalg.inv(mass_v)

        # --- node coordinates, corners, diameters ---------------------------
        self.node_coords = self._map_points(ev, ("n",) * hd, basis.nodes_1d)
        self.corners = self._map_points(ev, ("c",) * hd, np.array([0.0, 1.0]))
        diff = self.corners[:, :, None, :] - self.corners[:, None, :, :]
        self.diameter = np.sqrt((diff ** 2).sum(-1)).max(axis=(1, 2))

        # --- face metric batches --------------------------------------------
        topo = mesh.topology
        self.conforming = []
        for batch in topo.conforming:
            fg = self._face_metric(batch.left, batch.axis, side=1)
            self.conforming.append(fg)
        self.hanging = []
        for batch in topo.hanging:
            fine_side = 0 if batch.orient == 1 else 1
            fg = self._face_metric(batch.fine, batch.axis, side=fine_side)
            self.hanging.append(fg)
        self.boundary = []
        for batch in topo.boundary:
            fg = self._face_metric(batch.leaves, batch.axis, side=batch.side,
                                   outward=True)
            self.boundary.append(fg)

    # -- helpers -------------------------------------------------------------

    def _map_points(self, ev, hsets, pts_z):
        """Physical coordinates of the tensor grid (hsets x pts_z) on every
        element, flattened C-order; returns (n_el, n_pts, d)."""
        mesh = self.mesh
        hd = mesh.dim - 1
        zt = self.z_top
        h = ev.eval(hsets)                               # (n_el, nph)
        n_el, nph = h.shape
        npz = len(pts_z)
        coords_h = []
        for a in range(hd):
            pts = ev.pointsets[hsets[a]]
            coords_h.append(self.lo[:, a][:, None] + self.sizes[:, a][:, None] * pts[None, :])
        zb = self.lo[:, -1][:, None] + self.sizes[:, -1][:, None] * pts_z[None, :]
        out = np.empty((n_el, nph, npz, mesh.dim))
        if hd == 1:
            out[..., 0] = coords_h[0][:, :, None]
        else:
            n0 = len(ev.pointsets[hsets[0]])
            n1 = len(ev.pointsets[hsets[1]])
            xg = np.broadcast_to(coords_h[0][:, :, None], (n_el, n0, n1)).reshape(n_el, nph)
            yg = np.broadcast_to(coords_h[1][:, None, :], (n_el, n0, n1)).reshape(n_el, nph)
            out[..., 0] = xg[:, :, None]
            out[..., 1] = yg[:, :, None]
        out[..., -1] = zb[:, None, :] + h[:, :, None] * (1.0 - zb[:, None, :] / zt)
        return out.reshape(n_el, nph * npz, mesh.dim)

    def _face_metric(self, elements, axis, side, outward=False):
        """Non-normalized +axis-oriented surface normal integrated weights for
        the (axis, side) faces of the given elements."""
        mesh = self.mesh
        basis = self.basis
        d = mesh.dim
        hd = d - 1
        zt = self.z_top
        ev = self._ev
        nq1 = basis.n_quad_1d
        qx = basis.quad_x
        edge = "e1" if side == 1 else "e0"
        lo = self.lo[elements]
        sizes = self.sizes[elements]
        n_f = len(elements)

        if axis == d - 1:
            # horizontal face: points = horizontal quad grid
            hsets = ("q",) * hd
            h, dh = ev.eval(hsets, deriv=True)
            h, dh = h[elements], dh[elements]
            zb_face = lo[:, -1] + sizes[:, -1] * float(side)
            decay = (1.0 - zb_face / zt)[:, None]
            ntilde = np.empty(h.shape + (d,))
            if d == 2:
                ntilde[..., 0] = -dh[..., 0] * sizes[:, 0][:, None] * decay
                ntilde[..., 1] = sizes[:, 0][:, None]
            else:
                ntilde[..., 0] = -sizes[:, 1][:, None] * dh[..., 0] * sizes[:, 0][:, None] * decay
                ntilde[..., 1] = -sizes[:, 0][:, None] * dh[..., 1] * sizes[:, 1][:, None] * decay
                ntilde[..., 2] = (sizes[:, 0] * sizes[:, 1])[:, None]
        else:
            # vertical face: points = (other horizontal axes) x z quad
            hsets = ["q"] * hd
            hsets[axis] = edge
            h = ev.eval(tuple(hsets))[elements]          # (n_f, n_edge_pts)
            zz_prof = 1.0 - h / zt                       # z-independent
            nother = h.shape[1]
            ntilde = np.zeros((n_f, nother, nq1, d))
            zzv = sizes[:, -1][:, None, None] * zz_prof[:, :, None]
            if d == 2:
                ntilde[..., 0] = zzv
            else:
                other = 1 - axis
                ntilde[..., axis] = sizes[:, other][:, None, None] * zzv
            ntilde = ntilde.reshape(n_f, nother * nq1, d)

        if outward and side == 0:
            ntilde = -ntilde
        mag = np.sqrt((ntilde ** 2).sum(-1))
        normal = ntilde / mag[..., None]
        ws = basis.face_w[None, :] * mag
        return FaceGeometry(normal=normal, ws=ws)

    # -- public queries --------------------------------------------------------

    @property
    def n_elements(self):
        return self.mesh.n_leaves

    @property
    def min_diameter(self):
        return float(self.diameter.min())

    def element(self, index):
        return ElementGeometry(self, index)

    def apply_mass_inverse(self, dual, out=None, elements=slice(None)):
        """Nodal coefficients from a dual (test-function integral) vector.

        dual: (n_el, ..., n_nodes), element axis first -> same shape.
        The factorized inverse applies as one batched GEMM over the
        horizontal block and one flat GEMM over the shared vertical block.
        """
        basis = self.basis
        hd = self.mesh.dim - 1
        nh = (basis.degree + 1) ** hd
        nz = basis.degree + 1
        shape = dual.shape
        ne = shape[0]
        x = dual.reshape(ne, -1, nh, nz)
        nx = x.shape[1]
        # horizontal: (ne, nh, nh) @ (ne, nh, nx*nz)
        xt = np.ascontiguousarray(x.transpose(0, 2, 1, 3)).reshape(ne, nh, nx * nz)
        xt = np.matmul(self.mass_h_inv[elements], xt)
        # vertical: (..., nz) @ (nz, nz)^T
        x = xt.reshape(ne, nh, nx, nz) @ self.mass_v_inv.T
        x = x.transpose(0, 2, 1, 3).reshape(shape)
        if out is not None:
            out[...] = x
            return out
        return x

    def total_volume(self):
        return float((self.basis.vol_w[None, :] * self.det_j).sum())


def build_geometry(mesh, solution_degree, terrain=None, geom_degree=None,
                   n_quad_1d=None, z_top=None):
    """Metric terms for a mesh; terrain is a height function h(x[,y]) or None."""
    if z_top is not None and abs(z_top - mesh.extents[-1]) > 1e-9 * mesh.extents[-1]:
        raise ConfigurationError(
            f"z_top={z_top} must equal the vertical extent {mesh.extents[-1]}")
    if geom_degree is None:
        geom_degree = solution_degree if terrain is not None else 1
    basis = make_basis(mesh.dim, solution_degree, n_quad_1d)
    surface = None
    if terrain is not None:
        surface = TerrainSurface(terrain, mesh.extents, mesh.root_counts,
                                 geom_degree)
    return MeshGeometry(mesh, basis, surface, geom_degree)


def apply_terrain_mapping(mesh, height_fn, z_top=None, solution_degree=4,
                          geom_degree=None, n_quad_1d=None):
    """Terrain-mapped geometry (the Gal-Chen lift documented above)."""
    return build_geometry(mesh, solution_degree, terrain=height_fn,
                          geom_degree=geom_degree, n_quad_1d=n_quad_1d,
                          z_top=z_top)
