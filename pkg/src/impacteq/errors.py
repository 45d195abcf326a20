"""Exception hierarchy shared across the package."""


class ImpactEqError(Exception):
    """Base class for all package errors."""


class IntegrationError(ImpactEqError):
    """Raised when an integrand evaluates to a non-finite value."""

    def __init__(self, abscissa, value):
        self.abscissa = abscissa
        self.value = value
        super().__init__(f"non-finite integrand value {value!r} at u={abscissa!r}")


class ContractViolation(ImpactEqError):
    """A numerical routine detected that its input broke a stated precondition."""


class DomainError(ImpactEqError, ValueError):
    """Evaluation point outside the function's domain."""


class ValidationError(ImpactEqError, ValueError):
    """Market specification failed validation.

    ``violations`` holds every problem found, not just the first.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ParameterError(ValidationError):
    pass


class MonotonicityError(ValidationError):
    pass


class PositivityError(ValidationError):
    pass


class InternalConsistencyError(ImpactEqError):
    """A guard that should be unreachable for validated inputs tripped."""


class OptimalityViolation(ImpactEqError):
    """A challenger strategy beat the candidate equilibrium strategy."""

    def __init__(self, report, challenger):
        self.report = report
        self.challenger = challenger
        super().__init__(
            f"optimality violated: worst_gap={report.worst_gap:.3e}, "
            f"ascent_gain={report.ascent_gain:.3e}, tol={report.tol:.3e}"
        )


class ConfigurationError(ImpactEqError, ValueError):
    """Input configuration is malformed or unsupported for the requested method."""


class FlatObjectiveWarning(UserWarning):
    """Expected profit is identically zero over the searched fee range."""
