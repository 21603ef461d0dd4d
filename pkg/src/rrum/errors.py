"""Exception hierarchy shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class MatrixFileError(ValidationError):
    """A matrix file is missing, empty or malformed."""


class MonotonicityError(ValidationError):
    """Guess/slip values violate ``1 - s > g``."""


class DecompositionError(ValidationError):
    """Cholesky factorization hit a non-positive pivot."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot
