"""Exception hierarchy. CLI exit codes: usage errors map to 1, DataError to 2,
InvariantViolation to 3."""


class VmsplatError(Exception):
    """Base class for all package errors."""


class DataError(VmsplatError):
    """Malformed or inconsistent input data (bad file, bad record)."""


class ParseError(DataError):
    """Input point file could not be parsed."""


class SceneFormatError(DataError):
    """Packed scene file is corrupt, truncated, or violates format invariants."""


class DegenerateEllipsoidError(VmsplatError):
    """Ellipsoid has a zero scale component and cannot be sliced."""


class InvariantViolation(VmsplatError):
    """Internal consistency check failed (likely a bug or corrupt state)."""
