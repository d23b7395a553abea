"""Exception types raised across the package."""


class GFNodeError(Exception):
    """Base class for all package errors."""


class InvalidInputError(GFNodeError, ValueError):
    """Input data violates a documented precondition."""


class InvalidArgumentError(GFNodeError, ValueError):
    """An argument is out of range or has the wrong shape."""


class InsufficientDataError(GFNodeError, ValueError):
    """Not enough valid samples to compute the requested statistic."""


class IntegrationError(GFNodeError, RuntimeError):
    """The ODE solver gave up before reaching the final time."""

    def __init__(self, message, last_time):
        super().__init__(message)
        self.last_time = last_time


class NumericalFailureError(GFNodeError, ArithmeticError):
    """A computation produced non-finite values."""


class ParseError(GFNodeError, ValueError):
    """Malformed trajectory file."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class SchemaError(GFNodeError, ValueError):
    """Well-formed file whose content is inconsistent (e.g. atom counts)."""


class CheckpointFormatError(GFNodeError, ValueError):
    """Corrupt or truncated checkpoint file."""


class CheckpointVersionError(CheckpointFormatError):
    """Checkpoint written by an incompatible format version."""


class ConfigError(GFNodeError, ValueError):
    """Invalid or unknown configuration keys."""
