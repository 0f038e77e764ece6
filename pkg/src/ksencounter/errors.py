"""Exception hierarchy shared by all modules."""


class KSError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(KSError, ValueError):
    """Series operands disagree on number of variables or truncation order."""


class DomainError(KSError, ValueError):
    """Input lies outside the domain where an operation is defined."""


class CollisionError(DomainError):
    """A configuration sits on the collision point (u = 0 or r = 0)."""


class ChartDomainError(DomainError):
    """A point lies on the half-line excluded from a chart."""


class ParameterError(KSError, ValueError):
    """Inconsistent problem parameters (e.g. kappa not matching nu)."""


class InversionError(KSError, RuntimeError):
    """Newton iteration failed to converge.

    ``last`` carries the final iterate and ``residual`` its residual norm.
    """

    def __init__(self, message, last=None, residual=None, iterations=None):
        super().__init__(message)
        self.last = last
        self.residual = residual
        self.iterations = iterations


class ConsistencyError(KSError, RuntimeError):
    """An internal invariant was violated (indicates a bug, not bad input)."""


class AccuracyError(KSError, RuntimeError):
    """A numerical derivative could not reach the requested accuracy."""


class SingularityError(KSError, RuntimeError):
    """The integrator step size collapsed while approaching a singularity."""


class IllConditionedWarning(UserWarning):
    """Newton Jacobian condition number exceeded the configured bound."""
