"""Exception hierarchy shared by every module."""


class MomentfitError(Exception):
    """Base class for all errors raised by this package."""


class InputError(MomentfitError, ValueError):
    """Malformed or inconsistent input (bad shapes, non-finite values, bad files)."""


class InsufficientDataError(MomentfitError):
    """Fewer than two points, so no covariance can be estimated."""


class DegenerateWeightsError(MomentfitError):
    """The weights sum to zero."""


class ConditioningError(MomentfitError):
    """The Gram matrix is singular or too ill-conditioned to solve.

    The condition estimate is kept on the exception so callers can decide
    to split the region or lower the degree.
    """

    def __init__(self, estimate, degree=None):
        self.estimate = float(estimate)
        self.degree = degree
        where = f" at degree {degree}" if degree is not None else ""
        super().__init__(f"Gram matrix ill-conditioned{where}: cond ~ {self.estimate:.3e}")


class NoSplitError(MomentfitError):
    """All points coincide along every direction; a region cannot be split."""
