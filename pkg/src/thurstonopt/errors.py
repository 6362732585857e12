"""Exception hierarchy shared by all modules."""


class ThurstonOptError(Exception):
    """Base class for library errors."""


class NotFoundError(ThurstonOptError, KeyError):
    """Unknown rule name, vertex id, or word."""

    def __str__(self):
        return Exception.__str__(self)


class ValidationError(ThurstonOptError, ValueError):
    """A subdivision rule or input table fails its structural checks."""


class ContractViolation(ThurstonOptError, ValueError):
    """A documented precondition of an operation does not hold."""


class ResourceError(ThurstonOptError):
    """The requested object exceeds the configured size budget."""


class ConvergenceError(ThurstonOptError):
    """An iterative method stopped before reaching its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SearchFailure(ThurstonOptError):
    """A combinatorial search found nothing within its budget."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class PreconditionError(ContractViolation):
    """A pseudo-orbit or configuration is outside the operation's domain."""
