"""Exception hierarchy shared by all modules."""


class CrossmatchError(Exception):
    """Base class for errors raised by this package."""


class InvalidParameterError(CrossmatchError, ValueError):
    """A numeric parameter lies outside its allowed range."""


class InvalidInputError(CrossmatchError, ValueError):
    """Input data violates a structural precondition."""


class DegenerateStatisticError(CrossmatchError, ValueError):
    """Every paired difference is zero, so the test statistic has no null distribution."""


class SingularInformationError(CrossmatchError, ArithmeticError):
    """The Cox information matrix is singular (collinear design)."""


class ConvergenceError(CrossmatchError, ArithmeticError):
    """Newton iterations failed to converge.

    The ``trace`` attribute holds one ``(iteration, loglik, grad_sup_norm)`` tuple per step.
    """

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class ValidationError(CrossmatchError, ValueError):
    """A survey response is out of range or malformed."""


class ConfigError(CrossmatchError, ValueError):
    """A configuration key is missing or has an invalid value."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
