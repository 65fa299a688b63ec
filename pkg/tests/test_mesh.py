from fractions import Fraction

import numpy as np
import pytest

from orodg.errors import ConfigurationError, MeshError
from orodg.mesh import (build_uniform_mesh, check_tiling, dump_mesh,
                        refine_region, restore_mesh)


def brute_force_balance_check(mesh):
    """Independent oracle: exhaustively scan all leaf pairs for shared faces
    and assert the level difference never exceeds one."""
    views = mesh.leaf_views()
    for i, a in enumerate(views):
        for b in views[i + 1:]:
            shared_axis = None
            touching = True
            for ax in range(mesh.dim):
                lo = max(a.lo[ax], b.lo[ax])
                hi = min(a.hi[ax], b.hi[ax])
                if np.isclose(hi, lo):          # touching along this axis
                    if shared_axis is not None:
                        touching = False        # corner/edge contact only
                        break
                    shared_axis = ax
                elif hi < lo:
                    touching = False
                    break
            if touching and shared_axis is not None:
                assert abs(a.level - b.level) <= 1, (a, b)
    return True


def test_paper_reference_grid_counts():
    mesh = build_uniform_mesh((60.0e3, 40.0e3, 16.0e3), (60, 40, 16))
    assert mesh.n_leaves == 38400
    assert np.allclose(mesh.leaf_size(0), [1000.0, 1000.0, 1000.0])
    # effective resolution at r=4 is the element size over the degree
    assert np.allclose(mesh.leaf_size(0) / 4, 250.0)
    topo = mesh.topology
    assert sum(len(b.coarse) for b in topo.hanging) == 0
    expected_interior = 59 * 40 * 16 + 60 * 39 * 16 + 60 * 40 * 15
    assert sum(len(b.left) for b in topo.conforming) == expected_interior


def test_single_element_mesh():
    mesh = build_uniform_mesh((1.0, 1.0), (1, 1))
    topo = mesh.topology
    assert mesh.n_leaves == 1
    assert topo.n_boundary_faces() == 4
    assert topo.n_interior_faces() == 0


def test_two_element_mesh():
    mesh = build_uniform_mesh((2.0, 1.0), (2, 1))
    topo = mesh.topology
    assert mesh.n_leaves == 2
    assert topo.n_interior_faces() == 1
    assert topo.conforming[0].axis == 0


def test_refine_one_leaf_of_2x2():
    mesh = build_uniform_mesh((1.0, 1.0), (2, 2))
    refined = refine_region(mesh, lambda lf: lf.index == 0, 1)
    assert refined.n_leaves == 7
    topo = refined.topology
    sub = sum(len(b.coarse) for b in topo.hanging)
    coarse_faces = topo.n_hanging_coarse_faces(2)
    assert (coarse_faces, sub) == (2, 4)
    check_tiling(refined)


def test_refine_all_gives_uniform_finer():
    mesh = build_uniform_mesh((1.0, 1.0), (2, 2))
    refined = refine_region(mesh, lambda lf: True, 1)
    assert refined.n_leaves == 16
    assert all(lv == 1 for lv, _ in refined.leaves)
    assert sum(len(b.coarse) for b in refined.topology.hanging) == 0


def test_corner_double_refine_forces_balance():
    mesh = build_uniform_mesh((1.0, 1.0), (4, 4))
    refined = refine_region(
        mesh, lambda lf: bool(np.all(lf.hi <= 0.25 + 1e-12)), times=2)
    # the corner leaf's neighbors must have been force-refined
    assert refined.max_level == 2
    assert refined.n_leaves > 4 * 4 - 1 + 4 + 3    # strictly more than unforced
    check_tiling(refined)
    brute_force_balance_check(refined)


def test_refinement_keeps_exact_tiling_rational():
    mesh = build_uniform_mesh((3.0, 2.0), (3, 2))
    rng = np.random.default_rng(7)
    picks = set(rng.integers(0, 6, size=3).tolist())
    refined = refine_region(mesh, lambda lf: lf.index in picks, 1)
    refined = refine_region(refined, lambda lf: lf.level == 1 and lf.index % 3 == 0, 1)
    total = sum(Fraction(1, 2 ** (refined.dim * lv)) for lv, _ in refined.leaves)
    assert total == 6
    brute_force_balance_check(refined)


def test_hanging_bijection_and_subface_cover():
    mesh = build_uniform_mesh((1.0, 1.0, 1.0), (2, 2, 2))
    refined = refine_region(mesh, lambda lf: lf.index == 0, 1)
    topo = refined.topology
    for batch in topo.hanging:
        assert len(batch.coarse) % 4 == 0
        for g in range(len(batch.coarse) // 4):
            rows = slice(4 * g, 4 * g + 4)
            assert len(set(batch.coarse[rows].tolist())) == 1
            assert sorted(batch.subface[rows].tolist()) == [0, 1, 2, 3]


def test_periodic_wrap_faces():
    mesh = build_uniform_mesh((1.0, 1.0), (2, 2), periodic=(True, False))
    topo = mesh.topology
    # periodic x: 2 interior + 2 wrap faces along x; z stays bounded
    assert sum(len(b.left) for b in topo.conforming if b.axis == 0) == 4
    assert topo.n_boundary_faces() == 4


def test_configuration_errors():
    with pytest.raises(ConfigurationError):
        build_uniform_mesh((0.0, 1.0), (2, 2))
    with pytest.raises(ConfigurationError):
        build_uniform_mesh((1.0, 1.0), (0, 2))
    with pytest.raises(ConfigurationError):
        build_uniform_mesh((1.0, 1.0, 1.0), (2, 2))


def test_dump_restore_roundtrip():
    mesh = build_uniform_mesh((1.0, 2.0), (2, 3), periodic=(True, False))
    refined = refine_region(mesh, lambda lf: lf.index in (0, 3), 1)
    text = dump_mesh(refined)
    back = restore_mesh(text)
    assert back.leaves == refined.leaves
    assert back.extents == refined.extents
    assert back.periodic == refined.periodic
    assert back.fingerprint == refined.fingerprint
    with pytest.raises(ConfigurationError):
        restore_mesh("not-a-mesh 9\n")


def test_duplicate_leaves_rejected():
    with pytest.raises(MeshError):
        from orodg.mesh import ForestMesh
        ForestMesh(2, (1.0, 1.0), (1, 1), [(0, (0, 0)), (0, (0, 0))])
