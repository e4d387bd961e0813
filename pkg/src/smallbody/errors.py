"""Exception hierarchy shared by all modules.

Every error carries a stable ``code`` string so the CLI can report it and map
it onto an exit status.
"""

from __future__ import annotations


class SmallBodyError(Exception):
    code = "error"


class InvalidArgumentError(SmallBodyError, ValueError):
    code = "invalid_argument"


class MeshError(SmallBodyError):
    code = "mesh_error"


class MeshParseError(MeshError):
    code = "mesh_parse"


class NonWatertightMeshError(MeshError):
    code = "mesh_not_watertight"


class DegenerateFaceError(MeshError):
    code = "mesh_degenerate_face"


class NonOrientableMeshError(MeshError):
    code = "mesh_not_orientable"


class DegenerateMeshError(MeshError):
    """Two distinct panels share a centroid."""

    code = "mesh_coincident_centroids"


class NumericalBreakdownError(SmallBodyError, ArithmeticError):
    code = "numerical_breakdown"


class SolverError(NumericalBreakdownError):
    def __init__(self, message: str, condition: float | None = None):
        super().__init__(message)
        self.condition = condition

    code = "solver_failure"


class DivergenceError(NumericalBreakdownError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations

    code = "iteration_diverged"


class NotPositiveDefiniteError(NumericalBreakdownError):
    code = "not_positive_definite"


class InsufficientDataError(NumericalBreakdownError):
    code = "insufficient_data"


class ResonanceError(NumericalBreakdownError):
    """Impedance denominator ``1 + hS/C`` vanishes."""

    code = "impedance_resonance"


class CoverageError(SmallBodyError):
    def __init__(self, message: str, missing: dict | None = None):
        super().__init__(message)
        self.missing = missing or {}

    code = "kappa_coverage"
