"""Exception types shared across the package."""


class FactorizationError(ValueError):
    """A matrix factorization failed (non-SPD input).

    ``pivot`` is the zero-based index of the first failing Cholesky pivot,
    or None when it could not be located.
    """

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class DegenerateDataError(ValueError):
    """The data cannot identify the model parameters (e.g. zero variance)."""


class ConvergenceError(RuntimeError):
    """An iterative optimizer exhausted its budget.

    ``last_iterate`` carries the best point seen so far.
    """

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate
