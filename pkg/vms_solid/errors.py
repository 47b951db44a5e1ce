"""
Errors - Exception hierarchy for the solver.

Every failure raised by the library derives from SolidError so that the
tool layer can turn it into an error dictionary and the CLI into an exit
code. Numerical failures map to exit code 1, configuration failures to 2.
"""

from typing import List, Optional


class SolidError(Exception):
    """Base class for all solver errors."""

    exit_code = 1


class MeshFormatError(SolidError):
    """Malformed or unsupported mesh file."""

    exit_code = 2


class DegenerateElementError(SolidError):
    """Element with zero volume."""

    def __init__(self, message: str, element_id: Optional[int] = None):
        super().__init__(message)
        self.element_id = element_id


class InvertedElementError(SolidError):
    """Element with non-positive signed volume."""

    def __init__(self, message: str, element_id: Optional[int] = None):
        super().__init__(message)
        self.element_id = element_id


class MeshInversionError(SolidError):
    """Mesh motion produced a non-positive element volume."""

    def __init__(self, element_id: int, volume: float):
        super().__init__(f"mesh inversion: element {element_id} has volume {volume:.3e}")
        self.element_id = element_id
        self.volume = volume


class KinematicInversionError(SolidError):
    """det(I - grad u) <= 0 or J <= 0."""


class ModuliRangeError(SolidError):
    """Elastic constants outside their admissible range."""

    exit_code = 2


class AssemblyError(SolidError):
    """Inconsistent inputs to an assembly routine."""


class DirichletConflictError(SolidError):
    """Two different values prescribed on the same degree of freedom."""

    exit_code = 2


class LinearSolverError(SolidError):
    """Singular matrix or Krylov iteration cap reached."""

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


class ConvergenceError(SolidError):
    """Newton iteration did not converge."""

    def __init__(self, message: str, trace: Optional[List[float]] = None):
        super().__init__(message)
        self.trace = list(trace or [])


class CaseConfigError(SolidError):
    """Invalid case file or override."""

    exit_code = 2

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnknownPresetError(CaseConfigError):
    """Preset name not defined in presets.yml."""


class ProbeOrderError(SolidError):
    """Probe sample appended out of time order."""


class ProbeLocationError(SolidError):
    """Probe point outside the domain."""

    exit_code = 2
