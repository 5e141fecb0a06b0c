"""Exception hierarchy shared by every ncsim module."""


class NcsError(Exception):
    """Base class for all errors raised by ncsim."""


class DimensionError(NcsError, ValueError):
    """Matrix or vector shapes do not agree."""


class DomainError(NcsError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class ConfigurationError(NcsError, ValueError):
    """A policy or model was configured in a way that cannot be evaluated."""


class DesignError(NcsError, RuntimeError):
    """Controller synthesis failed (e.g. the Riccati recursion did not converge)."""


class ContractViolation(NcsError, RuntimeError):
    """A stepper was called with a state it cannot advance."""


class ValidationError(NcsError, ValueError):
    """A scenario failed validation. ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
