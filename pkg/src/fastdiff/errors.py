"""Exception hierarchy shared by the solver modules."""


class FastDiffError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FastDiffError, ValueError):
    """Invalid parameters or configuration; ``field`` names the culprit."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class StepRejected(FastDiffError):
    """Newton iteration did not converge; the caller should shrink dt."""


class IntegrationFailure(FastDiffError):
    """Time step fell below dt_min."""


class FitFailure(FastDiffError):
    """A least-squares fit could not be performed or is meaningless."""


class BracketError(FastDiffError):
    """Shooting bracket does not straddle the target radius."""


class NumericalError(FastDiffError):
    """An inner numerical routine (ODE, eigen, quadrature) failed."""


class ContractError(FastDiffError, ValueError):
    """Inputs violate an operation's preconditions."""
