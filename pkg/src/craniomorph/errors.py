"""Exception hierarchy.

Three broad families map onto CLI exit codes: validation problems (bad
arguments, malformed configs, inconsistent inputs) exit 2, pipeline stage
failures (fits that do not converge, degenerate geometry) exit 3, and
file-format / IO problems exit 4.
"""


class CraniomorphError(Exception):
    """Base class for all package errors."""


class ValidationError(CraniomorphError):
    """Invalid argument values or inconsistent inputs (exit code 2)."""


class ConfigError(ValidationError):
    """Malformed or out-of-range configuration (exit code 2)."""


class StageError(CraniomorphError):
    """A pipeline stage failed on valid inputs (exit code 3)."""


class DegenerateGeometryError(StageError):
    """Geometry too degenerate to process (collinear points, zero normals...)."""


class FitFailureError(StageError):
    """A model fit did not reach the required support or convergence.

    Carries diagnostic context so batch drivers can report the best attempt.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InsufficientSupportError(StageError):
    """Not enough samples inside an operator's support region."""


class AlignmentError(StageError):
    """A registration produced a pose outside the expected regime."""


class EmptyProfileError(StageError):
    """A planar section produced no usable profile points."""


class FormatError(CraniomorphError):
    """Malformed external file (exit code 4). Carries path and line."""

    def __init__(self, message, path=None, line=None):
        if path is not None:
            where = f"{path}:{line}" if line is not None else str(path)
            message = f"{where}: {message}"
        super().__init__(message)
        self.path = path
        self.line = line
