"""Exception hierarchy shared by all solver modules."""


class InvalidArgumentError(ValueError):
    """Raised when an argument violates an operation's precondition."""


class EmptyDensityError(InvalidArgumentError):
    """Raised when an operation needs positive mass but got none."""


class DomainOverflowError(InvalidArgumentError):
    """Raised when particles leave the truncated domain [-L, L].

    Usually means the half-width ``L`` is too small for the run.
    """


class UnequalMassError(InvalidArgumentError):
    """Raised when a Wasserstein distance is requested between unequal masses."""


class CFLError(InvalidArgumentError):
    """Raised when an explicit time step exceeds the stability bound."""

    def __init__(self, message, admissible_dt):
        super().__init__(message)
        self.admissible_dt = admissible_dt


class SolverStallError(RuntimeError):
    """Raised by the driver when a transport step fails to converge.

    The partially filled trajectory is attached as ``record``.
    """

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class ConfigError(ValueError):
    """Raised for unreadable or invalid run configurations."""
