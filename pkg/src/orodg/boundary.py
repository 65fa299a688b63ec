"""Boundary ghost states for the DG face loops.

Two kinds cover the benchmark suite: slip walls (mirror ghost) and far-field
boundaries that prescribe the discrete background state (used beneath the
sponge layer as the stand-in for true non-reflecting conditions).
"""

import numpy as np

from .errors import ConfigurationError
from .physics import conserved_to_primitive

WALL = "wall"
FARFIELD = "farfield"


def mirror_state(trace, normal):
    """Slip-wall exterior state: normal velocity negated, density, pressure
    (hence total energy) and tangential velocity copied.

    trace: (n_faces, n_var, n_q) conserved values; normal: (n_faces, n_q, d).
    """
    d = trace.shape[1] - 2
    ghost = trace.copy()
    mom_n = np.zeros((trace.shape[0], trace.shape[2]))
    for a in range(d):
        mom_n += trace[:, 1 + a, :] * normal[:, :, a]
    for a in range(d):
        ghost[:, 1 + a, :] -= 2.0 * mom_n * normal[:, :, a]
    return ghost


class BoundaryCondition:
    """Ghost-state provider for one boundary face batch.

    For farfield batches the prescribed conserved traces are stored once
    (shape (n_faces, n_var, n_qf)); the derived pressure and enthalpy-flux
    traces used by the linear operators are cached per flow model.
    """

    def __init__(self, kind, ghost_conserved=None):
        if kind not in (WALL, FARFIELD):
            raise ConfigurationError(f"unknown boundary kind {kind!r}")
        if kind == FARFIELD and ghost_conserved is None:
            raise ConfigurationError("farfield boundary needs a ghost state")
        self.kind = kind
        self.ghost_conserved = ghost_conserved
        self._cache = {}

    def conserved_ghost(self, trace, normal, rng):
        if self.kind == WALL:
            return mirror_state(trace, normal)
        return self.ghost_conserved[rng[0]:rng[1]]

    def scalar_ghost(self, trace_scalar, model, rng):
        """Exterior trace for the pressure-like scalar of the gradient
        operator: wall copies the interior, farfield fixes the background."""
        if self.kind == WALL:
            return trace_scalar
        key = ("p", id(model))
        if key not in self._cache:
            W = conserved_to_primitive(self.ghost_conserved, model, var_axis=1,
                                       check=False)
            self._cache[key] = np.ascontiguousarray(W.p[:, None, :])
        return self._cache[key][rng[0]:rng[1]]

    def hv_ghost(self, trace_vh, normal, model, rng):
        """Exterior (V..., h) traces for the enthalpy-flux divergence."""
        d = trace_vh.shape[1] - 1
        if self.kind == WALL:
            ghost = trace_vh.copy()
            vn = np.zeros((trace_vh.shape[0], trace_vh.shape[2]))
            for a in range(d):
                vn += trace_vh[:, a, :] * normal[:, :, a]
            for a in range(d):
                ghost[:, a, :] -= 2.0 * vn * normal[:, :, a]
            return ghost
        key = ("hv", id(model))
        if key not in self._cache:
            U = self.ghost_conserved
            W = conserved_to_primitive(U, model, var_axis=1, check=False)
            h = (W.e + W.p / W.rho)[:, None, :]
            self._cache[key] = np.concatenate([U[:, 1:1 + d, :], h], axis=1)
        return self._cache[key][rng[0]:rng[1]]


def wall_everywhere(mesh):
    """Wall BC on every non-periodic boundary batch."""
    return [BoundaryCondition(WALL) for _ in mesh.topology.boundary]
