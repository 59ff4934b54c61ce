from typing import Optional


class TensorNetworkError(Exception):
    """Base class for every error raised by tnconvert."""


class ArgumentError(TensorNetworkError, ValueError):
    """An operation was called with arguments violating its preconditions."""


class ParseError(TensorNetworkError, ValueError):
    """A network document could not be read."""

    def __init__(self, message: str, location: Optional[str] = None):
        self.location = location
        if location is not None:
            message = f"{message} (at {location})"
        super().__init__(message)


class UnsupportedOperationError(TensorNetworkError):
    """The operation is not available for the given network shape or size."""


class OracleCapExceeded(UnsupportedOperationError):
    def __init__(self, requested: int, cap: int):
        self.requested = requested
        self.cap = cap
        super().__init__(f"Dense evaluation needs {requested} entries but the configured cap is {cap}.")
