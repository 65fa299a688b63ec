"""Forest mesh: quad/oct leaves with 2:1 balance and non-conforming faces.

A mesh is a root grid of nx x ny (x nz) level-0 cells over a box, plus a set
of leaf cells identified by (level, integer origin on that level's lattice).
Leaves are kept sorted in Morton (z-order) over level-normalized origins,
which makes partition chunks contiguous index ranges and fixes a canonical,
reproducible leaf ordering.

The vertical direction is always the last axis.
"""

import hashlib
import io
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, MeshError

MESH_FORMAT_VERSION = 1


@dataclass(frozen=True)
class LeafView:
    """Leaf handle passed to refinement predicates."""

    index: int
    level: int
    origin: tuple
    lo: np.ndarray      # physical box corner (pre-terrain)
    hi: np.ndarray

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class ConformingFaces:
    """Interior faces between same-level leaves, one batch per axis.

    left is the minus-side leaf (its +axis face), right the plus side.
    Periodic wrap faces are included.
    """

    axis: int
    left: np.ndarray
    right: np.ndarray


@dataclass(frozen=True)
class HangingFaces:
    """Coarse/fine face pairs for one axis and orientation.

    orient = 1 means the fine leaves sit on the +axis side of the coarse
    leaf.  Entries are sorted by (coarse, subface) so that each group of
    n_subfaces consecutive rows shares one coarse leaf.
    """

    axis: int
    orient: int
    coarse: np.ndarray
    fine: np.ndarray
    subface: np.ndarray


@dataclass(frozen=True)
class BoundaryFaces:
    axis: int
    side: int           # 0 = lower domain boundary, 1 = upper
    leaves: np.ndarray


class MeshTopology:
    def __init__(self, conforming, hanging, boundary):
        self.conforming = conforming    # list[ConformingFaces]
        self.hanging = hanging          # list[HangingFaces]
        self.boundary = boundary        # list[BoundaryFaces]

    def n_interior_faces(self):
        n = sum(len(b.left) for b in self.conforming)
        n += sum(len(b.coarse) for b in self.hanging)
        return n

    def n_hanging_coarse_faces(self, n_subfaces):
        return sum(len(b.coarse) // n_subfaces for b in self.hanging)

    def n_boundary_faces(self):
        return sum(len(b.leaves) for b in self.boundary)


def _morton_key(level, origin, max_level, nbits):
    key = 0
    shift = max_level - level
    for b in range(nbits):
        for a, c in enumerate(origin):
            key |= (((c << shift) >> b) & 1) << (b * len(origin) + a)
    return key


class ForestMesh:
    def __init__(self, dim, extents, root_counts, leaves, periodic=None):
        if dim not in (2, 3):
            raise ConfigurationError(f"dim must be 2 or 3, got {dim}")
        extents = tuple(float(e) for e in extents)
        root_counts = tuple(int(c) for c in root_counts)
        if len(extents) != dim or len(root_counts) != dim:
            raise ConfigurationError("extents/root_counts must match dim")
        if any(e <= 0 for e in extents):
            raise ConfigurationError(f"domain extents must be positive: {extents}")
        if any(c < 1 for c in root_counts):
            raise ConfigurationError(f"need >= 1 element per axis: {root_counts}")
        self.dim = dim
        self.extents = extents
        self.root_counts = root_counts
        self.periodic = tuple(bool(p) for p in (periodic or (False,) * dim))

        leaves = [(int(lv), tuple(int(c) for c in org)) for lv, org in leaves]
        max_level = max((lv for lv, _ in leaves), default=0)
        nbits = max(root_counts).bit_length() + max_level + 1
        leaves.sort(key=lambda lf: _morton_key(lf[0], lf[1], max_level, nbits))
        self.leaves = leaves
        self.max_level = max_level
        self._lookup = {leaf: i for i, leaf in enumerate(leaves)}
        if len(self._lookup) != len(leaves):
            raise MeshError("duplicate leaves")
        self._topology = None

    @property
    def n_leaves(self):
        return len(self.leaves)

    def leaf_size(self, level):
        """Physical (pre-terrain) box edge lengths of a level-l leaf."""
        return np.array([self.extents[a] / (self.root_counts[a] << level)
                         for a in range(self.dim)])

    def leaf_view(self, index):
        level, origin = self.leaves[index]
        size = self.leaf_size(level)
        lo = size * np.asarray(origin, dtype=float)
        return LeafView(index, level, origin, lo, lo + size)

    def leaf_views(self):
        return [self.leaf_view(i) for i in range(self.n_leaves)]

    @property
    def fingerprint(self):
        return hashlib.sha1(dump_mesh(self).encode()).hexdigest()[:16]

    def find_containing_leaf(self, level, coords):
        """Leaf covering the given lattice cell, or None.  Probes the cell
        itself and its ancestors."""
        coords = tuple(coords)
        for up in range(level + 1):
            idx = self._lookup.get((level - up, tuple(c >> up for c in coords)))
            if idx is not None:
                return idx, level - up
        return None

    @property
    def topology(self):
        if self._topology is None:
            self._topology = self._build_topology()
        return self._topology

    def _neighbor_cell(self, level, origin, axis, side):
        """Same-level neighbor lattice coords, or None at a wall boundary."""
        n = list(origin)
        n[axis] += 1 if side else -1
        count = self.root_counts[axis] << level
        if n[axis] < 0 or n[axis] >= count:
            if not self.periodic[axis]:
                return None
            n[axis] %= count
        return tuple(n)

    def _build_topology(self):
        d = self.dim
        lookup = self._lookup
        conf = [[] for _ in range(d)]
        hang = {}
        bdry = {}
        face_axes = [[a for a in range(d) if a != ax] for ax in range(d)]
        for idx, (level, origin) in enumerate(self.leaves):
            for axis in range(d):
                for side in (0, 1):
                    n = self._neighbor_cell(level, origin, axis, side)
                    if n is None:
                        bdry.setdefault((axis, side), []).append(idx)
                        continue
                    j = lookup.get((level, n))
                    if j is not None:
                        if side == 1:
                            conf[axis].append((idx, j))
                        continue
                    if level > 0:
                        pc = tuple(c >> 1 for c in n)
                        j = lookup.get((level - 1, pc))
                        if j is not None:
                            sf = 0
                            for k, fa in enumerate(face_axes[axis]):
                                sf |= (origin[fa] - 2 * pc[fa]) << k
                            hang.setdefault((j, axis, 1 - side), []).append((idx, sf))
                            continue
                    # neighbor cell must be covered by level+1 leaves
                    child = [2 * c for c in n]
                    child[axis] = 2 * n[axis] + (0 if side else 1)
                    if lookup.get((level + 1, tuple(child))) is not None:
                        continue    # fine side emits the hanging records
                    found = self.find_containing_leaf(level, n)
                    if found is None:
                        raise MeshError(
                            f"tiling gap next to leaf {(level, origin)} axis {axis}")
                    raise MeshError(
                        f"2:1 balance violated between {(level, origin)} and "
                        f"level-{found[1]} neighbor across axis {axis}")

        conforming = [ConformingFaces(axis=a,
                                      left=np.array([p[0] for p in conf[a]], dtype=np.int64),
                                      right=np.array([p[1] for p in conf[a]], dtype=np.int64))
                      for a in range(d) if conf[a]]
        hang_batches = {}
        for (coarse, axis, side_c), entries in sorted(hang.items()):
            n_sub = 2 ** (d - 1)
            if len(entries) != n_sub:
                raise MeshError(
                    f"hanging face of leaf {coarse} axis {axis} has "
                    f"{len(entries)} subfaces, expected {n_sub}")
            orient = side_c    # fine leaves sit on +axis side iff coarse face side is 1
            key = (axis, orient)
            for fine, sf in sorted(entries, key=lambda e: e[1]):
                hang_batches.setdefault(key, []).append((coarse, fine, sf))
        hanging = [HangingFaces(axis=axis, orient=orient,
                                coarse=np.array([e[0] for e in rows], dtype=np.int64),
                                fine=np.array([e[1] for e in rows], dtype=np.int64),
                                subface=np.array([e[2] for e in rows], dtype=np.int64))
                   for (axis, orient), rows in sorted(hang_batches.items())]
        boundary = [BoundaryFaces(axis=axis, side=side,
                                  leaves=np.array(rows, dtype=np.int64))
                    for (axis, side), rows in sorted(bdry.items())]
        return MeshTopology(conforming, hanging, boundary)


def build_uniform_mesh(extents, elements_per_axis, periodic=None):
    """All-level-0 mesh over the box with the given element counts."""
    dim = len(elements_per_axis)
    counts = tuple(int(c) for c in elements_per_axis)
    leaves = [(0, tuple(idx))
              for idx in np.ndindex(*counts)]
    return ForestMesh(dim, extents, counts, leaves, periodic)


def refine_region(mesh, predicate, times=1):
    """Refine every leaf matching the predicate `times` times, then restore
    2:1 balance by forced refinements."""
    leaves = list(mesh.leaves)
    size_cache = {}

    def view(i, level, origin):
        size = size_cache.get(level)
        if size is None:
            size = mesh.leaf_size(level)
            size_cache[level] = size
        lo = size * np.asarray(origin, dtype=float)
        return LeafView(i, level, origin, lo, lo + size)

    for _ in range(times):
        nxt = []
        for i, (level, origin) in enumerate(leaves):
            if predicate(view(i, level, origin)):
                nxt.extend(_children(level, origin, mesh.dim))
            else:
                nxt.append((level, origin))
        leaves = nxt
    leaves = _enforce_balance(mesh, leaves)
    return ForestMesh(mesh.dim, mesh.extents, mesh.root_counts, leaves,
                      mesh.periodic)


def _children(level, origin, dim):
    out = []
    for off in np.ndindex(*(2,) * dim):
        out.append((level + 1, tuple(2 * c + o for c, o in zip(origin, off))))
    return out


def _enforce_balance(mesh, leaves):
    dim = mesh.dim
    while True:
        lookup = {leaf: i for i, leaf in enumerate(leaves)}
        marked = set()
        for level, origin in leaves:
            if level < 2:
                continue
            for axis in range(dim):
                for side in (0, 1):
                    n = mesh._neighbor_cell(level, origin, axis, side)
                    if n is None:
                        continue
                    # look for a containing leaf at least two levels up
                    for up in range(1, level + 1):
                        cand = (level - up, tuple(c >> up for c in n))
                        if cand in lookup:
                            if up >= 2:
                                marked.add(cand)
                            break
        if not marked:
            return leaves
        nxt = []
        for leaf in leaves:
            if leaf in marked:
                nxt.extend(_children(leaf[0], leaf[1], dim))
            else:
                nxt.append(leaf)
        leaves = nxt


def check_tiling(mesh):
    """Exact integer volume check: leaves tile the root box exactly once."""
    d, L = mesh.dim, mesh.max_level
    total = sum(1 << (d * (L - lv)) for lv, _ in mesh.leaves)
    n_root = int(np.prod(mesh.root_counts))
    if total != n_root << (d * L):
        raise MeshError("leaves do not tile the root box")
    for lv, org in mesh.leaves:
        for a, c in enumerate(org):
            if not 0 <= c < (mesh.root_counts[a] << lv):
                raise MeshError(f"leaf {(lv, org)} outside the root box")
    return True


def check_balance(mesh):
    """2:1 constraint via neighbor probing (topology build also enforces it)."""
    mesh.topology
    return True


def dump_mesh(mesh):
    buf = io.StringIO()
    buf.write(f"orodg-mesh {MESH_FORMAT_VERSION}\n")
    buf.write(f"dim {mesh.dim}\n")
    buf.write("extents " + " ".join(repr(e) for e in mesh.extents) + "\n")
    buf.write("root " + " ".join(str(c) for c in mesh.root_counts) + "\n")
    buf.write("periodic " + " ".join(str(int(p)) for p in mesh.periodic) + "\n")
    buf.write(f"leaves {mesh.n_leaves}\n")
    for level, origin in mesh.leaves:
        buf.write(str(level) + " " + " ".join(str(c) for c in origin) + "\n")
    return buf.getvalue()


def restore_mesh(text):
    lines = text.strip().splitlines()
    header = lines[0].split()
    if header[0] != "orodg-mesh" or int(header[1]) != MESH_FORMAT_VERSION:
        raise ConfigurationError(f"unknown mesh format: {lines[0]!r}")
    fields = {}
    for ln in lines[1:6]:
        key, *vals = ln.split()
        fields[key] = vals
    dim = int(fields["dim"][0])
    extents = [float(v) for v in fields["extents"]]
    root = [int(v) for v in fields["root"]]
    periodic = [bool(int(v)) for v in fields["periodic"]]
    n = int(fields["leaves"][0])
    leaves = []
    for ln in lines[6:6 + n]:
        vals = [int(v) for v in ln.split()]
        leaves.append((vals[0], tuple(vals[1:])))
    if len(leaves) != n:
        raise ConfigurationError("truncated mesh dump")
    return ForestMesh(dim, extents, root, leaves, periodic)
