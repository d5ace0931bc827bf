"""Exception types raised across the package."""

from __future__ import annotations


class SdotLabError(Exception):
    """Base class for all package errors."""


class PreconditionError(SdotLabError, ValueError):
    pass


# convex2d
class DegenerateRegion(SdotLabError):
    pass


class NotDualizable(SdotLabError):
    pass


class NotAVertex(SdotLabError):
    pass


class EllipseNonConvergence(SdotLabError):
    pass


# measures
class QuadratureFailure(SdotLabError):
    pass


# sdot
class SamplingFailure(SdotLabError):
    pass


class NonConvergence(SdotLabError):
    def __init__(self, message: str, weights=None, residual: float | None = None):
        super().__init__(message)
        self.weights = weights
        self.residual = residual


class SingularHessian(SdotLabError):
    pass


# regularity
class CenteringFailure(SdotLabError):
    def __init__(self, message: str, last_slope=None, last_polygon=None):
        super().__init__(message)
        self.last_slope = last_slope
        self.last_polygon = last_polygon


class RadiusTooSmall(SdotLabError):
    pass


class WindowTooNarrow(SdotLabError):
    pass


class FitDomainError(SdotLabError, ValueError):
    pass


# cones
class Unsolvable(SdotLabError):
    pass


# lab
class ConfigError(SdotLabError, ValueError):
    """Scenario configuration is malformed; ``where`` names the offending field."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where
