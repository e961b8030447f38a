"""Exception hierarchy shared by every module."""


class FqrError(Exception):
    """Base class for all errors raised by fqreg."""

    kind = "error"


class ValidationError(FqrError, ValueError):
    """Inputs violate a documented precondition."""

    kind = "validation"


class CurveParseError(ValidationError):
    """A curve or response CSV could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateFitError(ValidationError):
    """A log-based criterion was requested for a model with zero check loss."""


class SolverError(FqrError, RuntimeError):
    """A numerical routine failed to converge or broke down."""

    kind = "numerical"
