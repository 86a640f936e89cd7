"""Exception types shared across the package."""


class ContractViolationError(ValueError):
    """An argument violates a documented precondition (dimension, range, ...)."""


class EvaluationError(RuntimeError):
    """A problem evaluation failed, e.g. a singular inner linear system."""


class InvalidStartError(ValueError):
    """The Lanczos start vector is zero, non-finite, or annihilated by the operator."""


class SingularSystemError(RuntimeError):
    """A shifted system was requested at lambda = 0 with a singular matrix."""


class SecularNonConvergenceError(RuntimeError):
    """Newton on the secular equation exceeded its iteration budget.

    Carries the last iterate so callers can inspect how far it got.
    """

    def __init__(self, message, last_lambda=None, last_w=None, iters=0):
        super().__init__(message)
        self.last_lambda = last_lambda
        self.last_w = last_w
        self.iters = iters


class UndefinedMetricError(ZeroDivisionError):
    """A relative error metric was requested with a zero denominator."""


class DenseCapExceededError(RuntimeError):
    """The dense oracle refuses problems above its size cap."""


class UsageError(ValueError):
    """A CLI/experiment spec could not be parsed or is inconsistent."""
