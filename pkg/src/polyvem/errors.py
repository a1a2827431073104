"""Exception hierarchy shared across the package.

Usage errors (bad parameters, malformed files) and numerical failures
(singular or badly conditioned systems) are kept in separate branches so
the CLI can map them to distinct exit codes.
"""


class PolyVemError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameterError(PolyVemError, ValueError):
    """A caller-supplied parameter is out of range or inconsistent."""


class MeshError(PolyVemError):
    """Topological or orientation violation in a polygonal mesh."""


class MeshFormatError(MeshError):
    """A mesh file could not be parsed into a valid mesh."""


class GeometryError(PolyVemError):
    """A polygon is degenerate or self-intersecting."""


class DataError(PolyVemError):
    """Problem data violates a compatibility requirement."""


class DomainError(PolyVemError):
    """A query point lies outside the element it was evaluated on."""


class NumericalError(PolyVemError):
    """Base class for failures of the numerical machinery."""


class ConditioningError(NumericalError):
    """A local linear system is numerically rank deficient."""


class SingularSystemError(NumericalError):
    """The assembled global system could not be factorized or solved."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
