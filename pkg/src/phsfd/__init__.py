"""Mesh-free Poisson solver on implicit geometries.

Interpolation points live on a tilted Cartesian grid that ignores the
boundary; evaluation points conform to the domain.  Local polyharmonic
spline stencils with a monomial tail turn the PDE and boundary conditions
into an overdetermined sparse system solved in the least-squares sense.
"""

from .config import RunConfig, load_config, save_config
from .errors import (
    ConfigError,
    DiagnosticsError,
    GeometryError,
    MeshfreeError,
    PointSetError,
    SolverError,
    StencilError,
)
from .pipeline import (
    convergence_study,
    prefine_study,
    run_solve,
    stability_study,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DiagnosticsError",
    "GeometryError",
    "MeshfreeError",
    "PointSetError",
    "RunConfig",
    "SolverError",
    "StencilError",
    "__version__",
    "convergence_study",
    "load_config",
    "prefine_study",
    "run_solve",
    "save_config",
    "stability_study",
]
