"""Exception types raised by the solvers."""


class MsbridgeError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(MsbridgeError, ValueError):
    """Invalid parameters or configuration."""


class DomainError(MsbridgeError, ValueError):
    """An argument lies outside the domain of an operation."""


class ResolutionError(MsbridgeError, ValueError):
    """The requested time or length scale is not resolved by the grid."""


class CFLError(MsbridgeError, ValueError):
    """Advection step violates the CFL restriction."""

    def __init__(self, message, min_steps):
        super().__init__(message)
        self.min_steps = min_steps


class ConvergenceError(MsbridgeError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class UnsupportedNormalizationError(MsbridgeError, ValueError):
    """Raised by the constant evaluators when tau != 1."""


class MissingTimeError(MsbridgeError, KeyError):
    """A marginal path does not contain a requested time."""


class IntervalError(MsbridgeError, RuntimeError):
    """A per-interval bridge failed inside a chain solve."""

    def __init__(self, message, interval):
        super().__init__(message)
        self.interval = interval
