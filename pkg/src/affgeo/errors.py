"""Exception hierarchy shared by every layer of the package."""


class AffGeoError(Exception):
    """Base class for all package errors."""


class DomainError(AffGeoError):
    """An elementary function was evaluated outside its analytic domain."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class QuadratureError(AffGeoError):
    """Adaptive quadrature exhausted its budget before reaching tolerance."""


class ParseError(AffGeoError, ValueError):
    """Malformed expression or catalog text."""


class SingularMetric(AffGeoError):
    """Metric is not positive definite at some point."""


class StepFailure(AffGeoError):
    """Geodesic integrator step size underflowed."""


class NonConvex(AffGeoError):
    """Hessian of a graph function is not positive definite."""


class DegenerateFrame(AffGeoError):
    """Basis used in the structure-equation solve is (numerically) singular."""


class IndefiniteType(AffGeoError):
    """Neither +b nor -b is positive definite in the centroaffine solve."""


class ZeroSupport(AffGeoError):
    """Support quantity f - sum x_i f_i vanishes."""


class ZeroCubicForm(AffGeoError):
    """Cubic form vanishes, so the maximizing frame is undefined."""


class NotMaximal(AffGeoError):
    """Graph fails the maximality gate required by a variational operation."""


class BoundaryViolation(AffGeoError):
    """Boundary conditions of a variational operation are not met."""


class UnknownSurface(AffGeoError, KeyError):
    """Catalog lookup for an id that does not exist."""

    def __str__(self):
        return Exception.__str__(self)


class InvalidConstant(AffGeoError, ValueError):
    """Constant override is unknown or outside its admissible range."""


class IoError(AffGeoError, OSError):
    """A mesh or report file could not be written."""
