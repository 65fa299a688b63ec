"""orodg: high-order IMEX-DG compressible Euler solver with gravity on
non-conforming (2:1-balanced) terrain-following meshes, plus the desk-scale
performance harness around it."""

__version__ = "0.1.0"

from .basis import ReferenceBasis, make_basis
from .boundary import BoundaryCondition, mirror_state
from .config import CaseConfig, load_config
from .dgops import DGOperators
from .errors import (ConfigurationError, GeometryError, MeshError, OrodgError,
                     PositivityError, SolverError, UsageError)
from .field import StateField, allocate_field, project_initial_data
from .geometry import apply_terrain_mapping, build_geometry
from .imex import (ButcherTableau, ImplicitSolveConfig, SplitOperators,
                   ars222, build_helmholtz_action, imex_step, run_time_loop)
from .krylov import KrylovStats, block_jacobi_preconditioner, gmres
from .mesh import ForestMesh, build_uniform_mesh, refine_region
from .partition import Partition, partition_leaves
from .physics import (CONST, DIMENSIONAL, CourantReport, FlowModel,
                      PhysicalConstants, PrimitiveState, ScalingNumbers,
                      conserved_to_primitive, courant_numbers, gravity_source,
                      inviscid_flux, nondimensionalize, primitive_to_conserved,
                      redimensionalize)
from .runner import (efficiency_comparison, extract_slice, run,
                     scaling_harness, setup_run)
