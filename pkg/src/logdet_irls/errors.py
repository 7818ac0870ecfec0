"""Exception types raised by the solvers and the harness."""


class IrlsError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(IrlsError, ValueError):
    pass


class UnsupportedVariantError(IrlsError, TypeError):
    pass


class DegenerateOperatorError(IrlsError):
    """The measurement operator does not have full row rank."""


class InfeasibleError(IrlsError):
    """The measurement vector is not in the image of the operator."""


class IllConditionedError(IrlsError):
    """An inner linear system is too ill-conditioned to be trusted.

    ``condition`` carries the estimate that triggered the error.
    """

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class DomainError(IrlsError, ValueError):
    pass


class CoverageInfeasibleError(IrlsError):
    pass


class SolverFailure(IrlsError):
    """A solver step failed; ``iteration`` is the index of the failing step."""

    def __init__(self, message, iteration):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration
