"""Exception types shared across the package."""


class ProbitselError(Exception):
    """Base class for all errors raised by this package."""


class DataError(ProbitselError):
    """A dataset file or array violates the input contract."""


class SingularDesignError(ProbitselError):
    """The Gram matrix of the active design columns is not positive definite.

    Carries the offending column index set so callers can distinguish a
    singular proposal (recoverable: auto-reject) from a singular current
    state (fatal).
    """

    def __init__(self, message, indices=None):
        super().__init__(message)
        self.indices = None if indices is None else tuple(int(i) for i in indices)


class NonSPDError(ProbitselError):
    """A matrix required to be symmetric positive definite is not.

    ``leading_minor`` is the 1-based index of the first non-positive
    leading minor reported by the Cholesky factorization.
    """

    def __init__(self, message, leading_minor=None):
        super().__init__(message)
        self.leading_minor = leading_minor
