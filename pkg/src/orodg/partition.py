"""Leaf ownership for parallel execution.

Leaves are already stored in Morton order (see mesh.py), so a partition is
a list of contiguous index ranges, one per worker, chosen to minimize the
largest per-worker weight (optimal contiguous split via bottleneck bisection).
Ghost lists are derived from the face topology.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass
class Partition:
    n_workers: int
    owner: np.ndarray          # (n_leaves,) worker id per leaf
    ranges: list               # per worker: (start, stop) in leaf order
    ghosts: list               # per worker: sorted array of non-owned neighbors

    def imbalance(self, weights):
        totals = np.array([weights[a:b].sum() for a, b in self.ranges])
        mean = totals.mean()
        return float(totals.max() / mean) if mean > 0 else 1.0


def _chunks_for_capacity(weights, cap):
    """Greedy packing into contiguous chunks of weight <= cap; returns the
    chunk boundaries, or None if some single weight exceeds cap."""
    bounds = [0]
    acc = 0.0
    for i, w in enumerate(weights):
        if w > cap:
            return None
        if acc + w > cap:
            bounds.append(i)
            acc = w
        else:
            acc += w
    bounds.append(len(weights))
    return bounds


def split_contiguous(weights, n_chunks):
    """Boundaries of the contiguous split minimizing the max chunk weight."""
    weights = np.asarray(weights, dtype=float)
    n = len(weights)
    if n_chunks >= n:
        return list(range(n + 1)) + [n] * (n_chunks - n)
    lo, hi = float(weights.max()), float(weights.sum())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        bounds = _chunks_for_capacity(weights, mid)
        if bounds is not None and len(bounds) - 1 <= n_chunks:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * max(hi, 1.0):
            break
    bounds = _chunks_for_capacity(weights, hi * (1 + 1e-12))
    while len(bounds) - 1 < n_chunks:
        bounds.append(n)
    return bounds


def partition_leaves(mesh, n_workers, weights=None):
    if n_workers < 1:
        raise ConfigurationError(f"need >= 1 worker, got {n_workers}")
    n = mesh.n_leaves
    if weights is None:
        weights = np.ones(n)
    weights = np.asarray(weights, dtype=float)
    bounds = split_contiguous(weights, n_workers)
    ranges = [(bounds[p], bounds[p + 1]) for p in range(n_workers)]
    owner = np.empty(n, dtype=np.int64)
    for p, (a, b) in enumerate(ranges):
        owner[a:b] = p

    neighbor_pairs = []
    topo = mesh.topology
    for batch in topo.conforming:
        neighbor_pairs.append(np.stack([batch.left, batch.right], axis=1))
    for batch in topo.hanging:
        neighbor_pairs.append(np.stack([batch.coarse, batch.fine], axis=1))
    ghosts = []
    if neighbor_pairs:
        pairs = np.concatenate(neighbor_pairs, axis=0)
        for p in range(n_workers):
            mine_l = owner[pairs[:, 0]] == p
            mine_r = owner[pairs[:, 1]] == p
            other = np.concatenate([pairs[mine_l & ~mine_r, 1],
                                    pairs[mine_r & ~mine_l, 0]])
            ghosts.append(np.unique(other))
    else:
        ghosts = [np.empty(0, dtype=np.int64) for _ in range(n_workers)]
    return Partition(n_workers=n_workers, owner=owner, ranges=ranges,
                     ghosts=ghosts)
