"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid experiment or solver configuration."""


class CapabilityError(RuntimeError):
    """An oracle was asked for a derivative it does not provide."""


class NotSPDError(RuntimeError):
    """Cholesky hit a non-positive pivot: the matrix is not positive definite."""


class NumericalAbort(RuntimeError):
    """A run produced a non-finite state.

    Carries the partial trajectory recorded up to (and including) the
    diagnostic record for the offending tick.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class BoundViolation(RuntimeError):
    """A trajectory exceeded its theoretical tracking-error envelope."""
