"""Exception types raised across the package."""


class KernelCalError(Exception):
    """Base class for all package errors."""


class DomainError(KernelCalError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(KernelCalError, ValueError):
    """Invalid or incomplete configuration."""


class DegenerateDataError(KernelCalError, ValueError):
    """Data cannot support the requested statistic (e.g. all points identical)."""


class SingularMatrixError(KernelCalError, ArithmeticError):
    """Matrix is numerically singular.

    Attributes
    ----------
    condition : float
        Ratio of the largest to the smallest absolute eigenvalue.
    """

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class NotPositiveDefiniteError(KernelCalError, ArithmeticError):
    """Matrix has an eigenvalue at or below the positivity tolerance."""

    def __init__(self, message, min_eigenvalue=float("nan")):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class DivergedError(KernelCalError, FloatingPointError):
    """Optimization produced a non-finite score or gradient."""

    def __init__(self, message, iteration):
        super().__init__(message)
        self.iteration = iteration
