"""
Exception hierarchy for Carleman Lab.

Every failure raised on purpose by the numerics derives from CarlemanLabError
so the CLI can map it to an exit status in one place.
"""


class CarlemanLabError(Exception):
    """Base class for all library errors."""


class ParameterError(CarlemanLabError, ValueError):
    """An argument lies outside the admissible range (s, tau, mu, power...)."""


class GridDomainError(CarlemanLabError, ValueError):
    """A region, segment or chart image does not fit inside the grid."""


class NoiseFloorError(CarlemanLabError):
    """Ball integrals stopped decreasing, so no order can be fitted."""


class ExtrapolationError(CarlemanLabError):
    """Richardson extrapolation of a weighted limit did not converge."""


class ShootingError(CarlemanLabError):
    """The extension profile ODE produced a non-decaying solution."""


class EigenSolverError(CarlemanLabError):
    """The tridiagonal eigensolver failed."""


class OutOfRegimeError(CarlemanLabError):
    """The input violates an assumption of the inequality being evaluated."""


class AliasingError(CarlemanLabError, ValueError):
    """Boundary data carries frequencies the tangential mesh cannot resolve."""


class DegenerateNormError(CarlemanLabError):
    """A norm ratio is undefined (zero denominator or equal norms)."""


class ConfigurationError(CarlemanLabError):
    """The run configuration is invalid or unreadable."""
