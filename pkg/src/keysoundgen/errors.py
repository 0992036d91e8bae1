"""Exception types shared across the package."""


class KeysoundError(Exception):
    """Base class for all errors raised by this package."""


class DataError(KeysoundError):
    """Invalid or inconsistent input data (bad files, bad shapes, bad labels)."""


class BmsParseError(DataError):
    """A BMS document could not be parsed. Carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConstraintError(KeysoundError):
    """A hard gameplay constraint cannot be satisfied."""


class PlacementOverflowError(ConstraintError):
    """More simultaneous playable objects than available controls."""
