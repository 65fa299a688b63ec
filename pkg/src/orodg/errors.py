"""Exception types shared across the solver."""


class OrodgError(Exception):
    pass


class ConfigurationError(OrodgError):
    """Invalid run/mesh/case configuration."""


class GeometryError(OrodgError):
    """Degenerate or inverted element geometry."""


class MeshError(OrodgError):
    """Inconsistent mesh topology (gap, overlap, balance violation)."""


class UsageError(OrodgError):
    """API misuse: mismatched meshes, bad plane, wrong argument combos."""


class PositivityError(OrodgError):
    """Non-physical density or pressure; carries the offending location."""

    def __init__(self, message, element=None, node=None, values=None):
        super().__init__(message)
        self.element = element
        self.node = node
        self.values = values


class SolverError(OrodgError):
    """Linear or fixed-point solver failure; carries iteration statistics."""

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats
