"""Exception types shared across the package."""


class SigmaKError(Exception):
    """Base class for all errors raised by sigmak."""


class DomainError(SigmaKError, ValueError):
    """An argument lies outside the domain of the operation."""


class NumericError(SigmaKError, ArithmeticError):
    """An iterative kernel failed to converge or produced non-finite values."""


class SingularDenominatorError(NumericError):
    """A quotient was requested with a vanishing denominator."""


class InadmissibleError(SigmaKError, ValueError):
    """A point lies outside the admissible cone.

    ``order`` is the first symmetric function index that failed,
    ``value`` the offending sigma value and ``margin`` the threshold in force.
    ``where`` locates the point inside a batch (flat index) when known.
    """

    def __init__(self, order, value, margin, where=None):
        self.order = int(order)
        self.value = float(value)
        self.margin = float(margin)
        self.where = where
        loc = "" if where is None else f" at {where}"
        super().__init__(
            f"point{loc} not admissible: sigma_{self.order} = {self.value:.6g} "
            f"<= margin {self.margin:.3g}"
        )


class ConditionViolatedError(SigmaKError, ValueError):
    """The cubic-reduction solvability condition fails somewhere."""

    def __init__(self, where, discriminant):
        self.where = where
        self.discriminant = float(discriminant)
        loc = "" if where is None else f" at {where}"
        super().__init__(
            f"b <= (n-1)a^2/(2(n-2)) violated{loc}: "
            f"discriminant {self.discriminant:.6g} < 0"
        )


class DiscretizationError(SigmaKError, ValueError):
    """A stencil could not be applied (missing neighbours, too few nodes)."""


class NoSubsolutionError(SigmaKError, RuntimeError):
    """The bump-doubling construction exceeded its amplitude cap."""


class RootNotFoundError(SigmaKError, RuntimeError):
    """No sign change was bracketed for the constant-solution polynomial."""


class PreconditionError(SigmaKError, ValueError):
    """A solver was started from an inadmissible initial guess."""


class SolverStalled(SigmaKError, RuntimeError):
    """Newton line search failed; the partial report is attached."""

    def __init__(self, message, report=None, field=None):
        super().__init__(message)
        self.report = report
        self.field = field


class ConfigError(SigmaKError, ValueError):
    """Malformed run configuration."""
