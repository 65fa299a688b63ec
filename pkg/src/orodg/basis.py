"""Reference-element machinery: nodal tensor-product bases and quadrature.

Everything lives on the reference cube [0,1]^d.  The solution basis is the
Lagrange basis on Gauss-Lobatto-Legendre (GLL) nodes; integrals use a
Gauss-Legendre rule with n_q points per axis (n_q = r+1 by default, exact
for polynomials of degree 2r+1).  Tensor operators are assembled once as
dense Kronecker products; at the polynomial degrees of interest (r <= 6)
these are small matrices and BLAS handles them efficiently.

Node and quadrature-point flattening is C-order over the axes (x, y, z),
i.e. the last (vertical) axis runs fastest.
"""

import functools
from dataclasses import dataclass

import numpy as np


def gauss_legendre(n):
    """Gauss-Legendre nodes and weights on [0,1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def gauss_lobatto(n):
    """Gauss-Lobatto-Legendre nodes on [0,1] (n >= 2, endpoints included)."""
    if n < 2:
        raise ValueError("GLL rule needs at least 2 nodes")
    if n == 2:
        return np.array([0.0, 1.0])
    # interior nodes are the roots of P'_{n-1}
    coeffs = np.zeros(n)
    coeffs[-1] = 1.0
    interior = np.polynomial.legendre.legroots(np.polynomial.legendre.legder(coeffs))
    x = np.concatenate(([-1.0], interior, [1.0]))
    return 0.5 * (x + 1.0)


def barycentric_weights(nodes):
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / diff.prod(axis=1)


def lagrange_eval_matrix(nodes, points):
    """Matrix L with L[p, j] = l_j(points[p]) for the Lagrange basis on nodes.

    Barycentric form; exact node hits are special-cased so the matrix rows
    stay exact 0/1 there.
    """
    nodes = np.asarray(nodes, dtype=float)
    points = np.asarray(points, dtype=float)
    w = barycentric_weights(nodes)
    diff = points[:, None] - nodes[None, :]
    exact = np.isclose(diff, 0.0, rtol=0.0, atol=1e-14)
    diff_safe = np.where(exact, 1.0, diff)
    terms = w[None, :] / diff_safe
    L = terms / terms.sum(axis=1, keepdims=True)
    hit_rows = exact.any(axis=1)
    if hit_rows.any():
        L[hit_rows] = exact[hit_rows].astype(float)
    return L


def lagrange_diff_matrix(nodes, points):
    """Matrix D with D[p, j] = l_j'(points[p]).

    Derivative of the Lagrange basis evaluated at arbitrary points, via the
    product-rule expansion.  O(n^3) per point but n is tiny here.
    """
    nodes = np.asarray(nodes, dtype=float)
    points = np.asarray(points, dtype=float)
    n = len(nodes)
    denom = np.empty(n)
    for j in range(n):
        denom[j] = np.prod(nodes[j] - np.delete(nodes, j))
    D = np.zeros((len(points), n))
    for j in range(n):
        others = np.delete(nodes, j)
        for m in range(n - 1):
            rest = np.delete(others, m)
            D[:, j] += np.prod(points[:, None] - rest[None, :], axis=1)
        D[:, j] /= denom[j]
    return D


def _kron_all(mats):
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


@dataclass(frozen=True)
class ReferenceBasis:
    """Degree-r nodal tensor basis with Gauss quadrature on [0,1]^d."""

    dim: int
    degree: int
    n_quad_1d: int
    nodes_1d: np.ndarray       # (r+1,) GLL nodes
    quad_x: np.ndarray         # (n_q,) Gauss points
    quad_w: np.ndarray         # (n_q,) Gauss weights
    interp_1d: np.ndarray      # (n_q, r+1) node values -> quad values
    diff_1d: np.ndarray        # (n_q, r+1) node values -> d/dxi at quad
    trace_1d: np.ndarray       # (2, r+1) node values -> value at {0, 1}
    vol_interp: np.ndarray     # (n_q^d, n_nodes)
    vol_diff: tuple            # d matrices (n_q^d, n_nodes), d/dxi_axis
    vol_w: np.ndarray          # (n_q^d,)
    face_interp: np.ndarray    # (n_q^(d-1), (r+1)^(d-1))
    face_w: np.ndarray         # (n_q^(d-1),)
    face_nodes: tuple          # face_nodes[axis][side] -> node index array
    half_interp_1d: tuple      # s -> (n_q, r+1), l_j((x_q + s)/2)
    mortar_interp: tuple       # subface -> (n_q^(d-1), (r+1)^(d-1))

    @property
    def n_nodes(self):
        return (self.degree + 1) ** self.dim

    @property
    def n_quad(self):
        return self.n_quad_1d ** self.dim

    @property
    def n_face_nodes(self):
        return (self.degree + 1) ** (self.dim - 1)

    @property
    def n_face_quad(self):
        return self.n_quad_1d ** (self.dim - 1)

    @property
    def n_subfaces(self):
        return 2 ** (self.dim - 1)

    def subface_coords(self, subface):
        """Per-face-axis half indices (0 = lower half) of a mortar subface."""
        return tuple((subface >> i) & 1 for i in range(self.dim - 1))


def _face_node_indices(dim, n1):
    """face_nodes[axis][side]: flat node indices on the face, C-ordered over
    the remaining axes."""
    shape = (n1,) * dim
    idx = np.arange(n1 ** dim).reshape(shape)
    out = []
    for axis in range(dim):
        sl0 = [slice(None)] * dim
        sl1 = [slice(None)] * dim
        sl0[axis] = 0
        sl1[axis] = n1 - 1
        out.append((idx[tuple(sl0)].ravel(), idx[tuple(sl1)].ravel()))
    return tuple(out)


@functools.lru_cache(maxsize=None)
def make_basis(dim, degree, n_quad_1d=None):
    if dim not in (2, 3):
        raise ValueError("dim must be 2 or 3")
    if degree < 1:
        raise ValueError("degree must be >= 1")
    r = degree
    n_q = n_quad_1d if n_quad_1d is not None else r + 1
    nodes = gauss_lobatto(r + 1)
    qx, qw = gauss_legendre(n_q)
    B = lagrange_eval_matrix(nodes, qx)
    D = lagrange_diff_matrix(nodes, qx)
    trace = lagrange_eval_matrix(nodes, np.array([0.0, 1.0]))

    vol_interp = _kron_all([B] * dim)
    vol_diff = []
    for axis in range(dim):
        mats = [B] * dim
        mats[axis] = D
        vol_diff.append(_kron_all(mats))
    vol_w = _kron_all([qw.reshape(1, -1)] * dim).ravel()

    face_interp = _kron_all([B] * (dim - 1)) if dim > 1 else np.ones((1, 1))
    face_w = (_kron_all([qw.reshape(1, -1)] * (dim - 1)).ravel()
              if dim > 1 else np.ones(1))

    half = tuple(lagrange_eval_matrix(nodes, 0.5 * (qx + s)) for s in (0, 1))
    n_sub = 2 ** (dim - 1)
    mortar = []
    for sub in range(n_sub):
        mats = [half[(sub >> i) & 1] for i in range(dim - 1)]
        mortar.append(_kron_all(mats))
    return ReferenceBasis(
        dim=dim,
        degree=r,
        n_quad_1d=n_q,
        nodes_1d=nodes,
        quad_x=qx,
        quad_w=qw,
        interp_1d=B,
        diff_1d=D,
        trace_1d=trace,
        vol_interp=vol_interp,
        vol_diff=tuple(vol_diff),
        vol_w=vol_w,
        face_interp=face_interp,
        face_w=face_w,
        face_nodes=_face_node_indices(dim, r + 1),
        half_interp_1d=half,
        mortar_interp=tuple(mortar),
    )
