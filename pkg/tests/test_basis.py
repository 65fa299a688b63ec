import numpy as np
import pytest

from orodg.basis import (gauss_legendre, gauss_lobatto, lagrange_diff_matrix,
                         lagrange_eval_matrix, make_basis)


@pytest.mark.parametrize("r", [1, 2, 3, 4, 6])
def test_gll_nodes_include_endpoints(r):
    x = gauss_lobatto(r + 1)
    assert x[0] == 0.0 and x[-1] == 1.0
    assert np.all(np.diff(x) > 0)


@pytest.mark.parametrize("r", [2, 4])
def test_quadrature_exact_to_2rp1(r):
    x, w = gauss_legendre(r + 1)
    for p in range(2 * r + 2):
        assert abs((w * x ** p).sum() - 1.0 / (p + 1)) < 1e-13


@pytest.mark.parametrize("r", [2, 4])
def test_interpolation_reproduces_polynomials(r):
    b = make_basis(2, r)
    rng = np.random.default_rng(0)
    coeff = rng.normal(size=r + 1)
    poly = np.polynomial.Polynomial(coeff)
    vals = poly(b.nodes_1d)
    assert np.abs(b.interp_1d @ vals - poly(b.quad_x)).max() < 1e-13
    dpoly = poly.deriv()
    assert np.abs(b.diff_1d @ vals - dpoly(b.quad_x)).max() < 1e-12


@pytest.mark.parametrize("r", [2, 4])
def test_diff_matrix_kills_constants(r):
    b = make_basis(2, r)
    assert np.abs(b.diff_1d.sum(axis=1)).max() < 1e-13


def test_volume_tensor_operators_match_1d_structure():
    b = make_basis(2, 3)
    rng = np.random.default_rng(1)
    vals = rng.normal(size=(4, 4))          # nodal grid (x, z)
    got = (b.vol_interp @ vals.ravel()).reshape(b.n_quad_1d, b.n_quad_1d)
    ref = b.interp_1d @ vals @ b.interp_1d.T
    assert np.abs(got - ref).max() < 1e-13
    gx = (b.vol_diff[0] @ vals.ravel()).reshape(b.n_quad_1d, b.n_quad_1d)
    assert np.abs(gx - b.diff_1d @ vals @ b.interp_1d.T).max() < 1e-12


@pytest.mark.parametrize("dim,r", [(2, 3), (3, 2), (3, 4)])
def test_mortar_interpolation_exact_for_polynomial_traces(dim, r):
    """Evaluating a degree-<=r face polynomial through the mortar matrices
    equals evaluating it directly at the mapped sub-face points."""
    b = make_basis(dim, r)
    rng = np.random.default_rng(2)
    fd = dim - 1
    # random tensor polynomial of degree <= r per face axis
    C = rng.normal(size=(r + 1,) * fd)

    def poly(pts):  # pts: (n, fd)
        out = np.zeros(len(pts))
        for idx in np.ndindex(*C.shape):
            term = C[idx] * np.ones(len(pts))
            for a, p in enumerate(idx):
                term = term * pts[:, a] ** p
            out += term
        return out

    face_nodes = np.stack(np.meshgrid(*[b.nodes_1d] * fd, indexing="ij"),
                          axis=-1).reshape(-1, fd)
    nodal = poly(face_nodes)
    qgrid = np.stack(np.meshgrid(*[b.quad_x] * fd, indexing="ij"),
                     axis=-1).reshape(-1, fd)
    for sf in range(b.n_subfaces):
        shifts = np.array(b.subface_coords(sf), dtype=float)
        mapped = 0.5 * (qgrid + shifts)
        got = b.mortar_interp[sf] @ nodal
        assert np.abs(got - poly(mapped)).max() < 1e-13


def test_face_nodes_pick_correct_slices():
    b = make_basis(3, 2)
    grid = np.arange(27).reshape(3, 3, 3)
    lo, hi = b.face_nodes[1]
    assert np.array_equal(grid[:, 0, :].ravel(), grid.ravel()[lo])
    assert np.array_equal(grid[:, 2, :].ravel(), grid.ravel()[hi])
