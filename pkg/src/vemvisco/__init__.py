"""Mixed virtual element solver for viscoelastic wave propagation in 2D.

Stress-velocity-rotation formulation of the standard linear solid (Zener)
model on general polygonal meshes, with H(div)-conforming tensor virtual
elements, Crank-Nicolson time stepping, and a manufactured-solution
verification harness.
"""

__version__ = "0.1.0"

from .assemble import MaterialParams, assemble_global, assemble_rhs
from .mesh import (BoundaryTag, PolygonalMesh, build_mesh, generate_cartesian,
                   generate_hexagonal, generate_partitioned, read_mesh,
                   write_mesh)
from .mms import (build_case, convergence_study, error_norms, fitted_rates,
                  marker_experiment, patch_test)
from .timeloop import CrankNicolson, SystemState, initial_state, run
from .vspace import DofLayout, VirtualSpace

__all__ = [
    "BoundaryTag", "CrankNicolson", "DofLayout", "MaterialParams",
    "PolygonalMesh", "SystemState", "VirtualSpace", "assemble_global",
    "assemble_rhs", "build_case", "build_mesh", "convergence_study",
    "error_norms", "fitted_rates", "generate_cartesian", "generate_hexagonal",
    "generate_partitioned", "initial_state", "marker_experiment", "patch_test",
    "read_mesh", "run", "write_mesh",
]
