"""Exception types shared across the package."""


class MeshFormatError(Exception):
    """Raised when a mesh file cannot be parsed. Carries the offending line number."""

    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class MeshValidationError(Exception):
    """Raised when a mesh violates a structural invariant."""


class DegenerateCellError(Exception):
    """Raised for cells with (numerically) vanishing area."""


class NumericalDegeneracyError(Exception):
    """Raised when a local Gram system is rank deficient beyond roundoff."""


class SingularSystemError(Exception):
    """Raised when a sparse factorization detects a singular matrix."""
