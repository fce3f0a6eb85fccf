"""Exception types shared across the package.

The CLI maps :class:`ConfigError` to exit code 2 and :class:`PhysicsError`
subclasses to exit code 1.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration input."""


class PhysicsError(RuntimeError):
    """A physically meaningful failure (instability, no solution, ...)."""


class DomainError(PhysicsError, ValueError):
    """Argument outside the domain where an operation is defined."""


class NoSolutionError(PhysicsError):
    """Root finding found no sign change in the search interval.

    ``sweep`` holds the diagnostic ``(x, f(x))`` samples that were examined.
    """

    def __init__(self, message, sweep=None):
        super().__init__(message)
        self.sweep = sweep


class LoopSingularityError(PhysicsError):
    """``1 + K_c(omega)`` vanishes: the in-loop field is marginally stable."""

    def __init__(self, message, omega=None):
        super().__init__(message)
        self.omega = omega


class UnsupportedFormError(DomainError):
    """Stability requested for a susceptibility that is not quadratic in omega."""
