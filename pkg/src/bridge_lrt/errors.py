"""Exception hierarchy shared by all modules."""


class BridgeLRTError(Exception):
    """Base class for library errors."""


class ParameterError(BridgeLRTError, ValueError):
    """Process parameters outside the admissible domain."""


class DomainError(BridgeLRTError, ValueError):
    """A time argument lies outside the process horizon."""


class GridError(BridgeLRTError, ValueError):
    """Time grid is not strictly increasing from 0 (or leaves the domain)."""


class DegenerateTrajectoryError(BridgeLRTError, ValueError):
    pass


class TrajectoryFormatError(BridgeLRTError, ValueError):
    """Malformed trajectory CSV. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EigenvalueTieError(BridgeLRTError, ArithmeticError):
    pass


class ConvergenceError(BridgeLRTError, ArithmeticError):
    """A bracketing root search found no sign change."""


class ToleranceError(BridgeLRTError, ArithmeticError):
    """Requested accuracy cannot be reached with the available eigenvalues."""
