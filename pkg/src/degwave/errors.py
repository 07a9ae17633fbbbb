"""Exception hierarchy shared by all degwave modules."""


class DegwaveError(Exception):
    """Base class for all errors raised by this package."""


class RegimeMismatch(DegwaveError, ValueError):
    """alpha is outside the admissible range of the requested regime."""


class GridTooCoarse(DegwaveError, ValueError):
    """Grid has too few cells for the requested operation."""


class DimensionMismatch(DegwaveError, ValueError):
    """Field length does not match the operator's dof count."""


class SolveFailure(DegwaveError, RuntimeError):
    """Internal tridiagonal solve broke down (should not happen for SPD)."""


class AlphaOne(DegwaveError, ValueError):
    """Hardy quotient is undefined at alpha = 1."""


class ZeroField(DegwaveError, ValueError):
    """Operation requires a nonzero field."""


class NonPositiveStep(DegwaveError, ValueError):
    """Time step must be positive and divide the horizon."""


class WindowMismatch(DegwaveError, ValueError):
    """Control window does not belong to the operator's grid."""


class NoConvergence(DegwaveError, RuntimeError):
    """Iterative solve failed to reach tolerance within the iteration cap."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class ZeroTarget(DegwaveError, ValueError):
    """Bounds check requires a nonzero target state."""


class MethodTooLarge(DegwaveError, ValueError):
    """Dense oracle requested beyond its dof cap."""


class ConfigError(DegwaveError, ValueError):
    """Experiment configuration could not be parsed or resolved."""
