"""Exception hierarchy shared by every volwriter module.

Library code raises these; the CLI maps ``exit_code`` onto the process exit status.
"""
from typing import Optional


class VolWriterError(Exception):
    """Base class for all volwriter failures."""
    exit_code = 1


class ConfigError(VolWriterError):
    """Invalid configuration file, key or value."""
    exit_code = 2


class DataError(VolWriterError):
    """Market data is malformed, incomplete or unusable."""
    exit_code = 3


class MalformedRowError(DataError):
    def __init__(self, path: str, line: int, reason: str) -> None:
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {reason}")


class CrossedQuoteError(DataError):
    pass


class UnsortedDataError(DataError):
    pass


class StaleDataError(DataError):
    pass


class MissingExpiryError(DataError):
    pass


class InsufficientHistoryError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class NumericError(VolWriterError):
    """A numerical routine could not produce a trustworthy value."""
    exit_code = 4


class InvalidInputError(NumericError, ValueError):
    """Inputs violate a documented precondition (non-finite, negative, ...)."""


class DegenerateInputError(NumericError):
    pass


class NoSolutionError(NumericError):
    pass


class ConvergenceError(NumericError):
    pass


class BranchCutError(NumericError):
    pass


class GridError(NumericError):
    def __init__(self, message: str, suggested_points: Optional[int] = None) -> None:
        self.suggested_points = suggested_points
        if suggested_points is not None:
            message = f"{message} (try n_points={suggested_points})"
        super().__init__(message)


class CalibrationError(NumericError):
    pass


class DegenerateSizeError(NumericError):
    pass


class MetricError(NumericError):
    """A metric is undefined for the given series; reported as absent."""
