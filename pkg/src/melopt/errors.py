"""Exception hierarchy shared by every solver and the CLI."""


class MelError(Exception):
    """Base class for all package errors."""


class DomainError(MelError, ValueError):
    """An argument lies outside the domain of a model function."""


class UnreachableLearnerError(MelError):
    """A learner has zero achievable rate to an orchestrator."""


class InvalidRegimeError(MelError):
    """The convergence bound is evaluated where its validity condition fails."""

    def __init__(self, tau, message=None):
        self.tau = tau
        super().__init__(message or f"convergence bound invalid at tau={tau}")


class FitError(MelError):
    """Not enough distinct grid points to fit the accuracy proxy."""


class InfeasibleError(MelError):
    """No solution satisfies the time, association and allocation constraints."""

    def __init__(self, message="", lower_bound=None):
        self.lower_bound = lower_bound
        super().__init__(message)


class BudgetExhaustedError(MelError):
    """A solver hit its node or iteration budget without a usable answer."""

    def __init__(self, message="", lower_bound=None):
        self.lower_bound = lower_bound
        super().__init__(message)


class TooLargeForOracleError(MelError):
    """Instance exceeds the exhaustive solver's enumeration guard."""


class ConfigError(MelError):
    """Invalid experiment configuration; the message names the field path."""
