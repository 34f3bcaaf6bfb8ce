"""Exception types raised across the package.

Every error that the command line surfaces as exit code 1 derives from
MeshfreeError; ConfigError maps to exit code 2 (usage / configuration).
"""


class MeshfreeError(Exception):
    """Base class for numerical and setup failures."""


class ConfigError(MeshfreeError):
    """Invalid configuration file or command-line usage."""


class GeometryError(MeshfreeError):
    """Degenerate or unsupported domain description."""


class PointSetError(MeshfreeError):
    """Point cloud generation or validation failed."""


class StencilError(MeshfreeError):
    """Local stencil system could not be built or factorized."""


class SolverError(MeshfreeError):
    """Global least-squares solve failed."""


class DiagnosticsError(MeshfreeError):
    """Singular-value estimation failed; carries the best estimate so far."""

    def __init__(self, message, best_estimate=None):
        super().__init__(message)
        self.best_estimate = best_estimate
