"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class QuadratureError(ArithmeticError):
    """Adaptive quadrature did not converge within its refinement budget.

    The best available estimate and its error bound are kept on the
    exception so callers can decide whether to use them anyway.
    """

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class IntegrationError(ArithmeticError):
    """Time stepping produced a non-finite state."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConsistencyError(AssertionError):
    """Two independent computations of the same quantity disagree."""

    def __init__(self, message, values=None):
        super().__init__(message)
        self.values = values


class DesignError(RuntimeError):
    """The dipole design optimizer could not satisfy its constraints."""

    def __init__(self, message, best=None, residuals=None):
        super().__init__(message)
        self.best = best
        self.residuals = residuals


class HypothesisRefusal(RuntimeError):
    """An operation refused to run because its hypotheses are not certified."""
