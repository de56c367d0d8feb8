"""Exception hierarchy shared by every gaussmon module."""


class GaussmonError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgument(GaussmonError, ValueError):
    """An argument violates a documented precondition."""


class NumericDomainError(GaussmonError, ArithmeticError):
    """A matrix is outside the domain of a formula (e.g. not positive definite)."""


class UnmonitoredLimit(GaussmonError, ValueError):
    """Zero-efficiency detection: the caller must switch to C = Gamma = 0."""


class NoSteadyState(GaussmonError, ArithmeticError):
    """The drift matrix is not Hurwitz, so no stationary covariance exists."""


class IntegrationFailure(GaussmonError, RuntimeError):
    """Time integration produced a non-finite or unphysical state."""

    def __init__(self, message, step):
        super().__init__(f"{message} (step {step})")
        self.step = step


class ScenarioError(InvalidArgument):
    """A scenario document failed to parse or validate."""

    def __init__(self, message, field=None, line=None):
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)
        self.field = field
        self.line = line
