"""Exception types shared across the toolkit.

Input mistakes (wrong space, empty spans, malformed configurations) raise
subclasses of GeometryInputError; numerical findings that invalidate a
construction (degenerate metrics, non-null planes, curvature obstructions)
raise subclasses of GeometryValueError so callers can tell the two apart.
"""


class GeometryInputError(ValueError):
    """Caller handed us inconsistent inputs."""


class GeometryValueError(ValueError):
    """Inputs are well-formed but numerically violate a required property."""


class DimensionMismatchError(GeometryInputError):
    pass


class ZeroSpanError(GeometryInputError):
    pass


class DegenerateProjectionError(GeometryValueError):
    """Projection target carries a degenerate restricted metric."""


class StencilBlockedError(GeometryInputError):
    """A finite-difference stencil runs into an excluded grid zone."""


class NotNullError(GeometryValueError):
    pass


class NotLegendreError(GeometryValueError):
    pass


class NotEnvelopingError(GeometryValueError):
    pass


class TransversalityError(GeometryValueError):
    pass


class FlatnessError(GeometryValueError):
    """Bundle fails a flatness requirement; carries the curvature report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class MonodromyError(GeometryValueError):
    """Nontrivial holonomy around a periodic axis."""


class ConfigurationError(GeometryValueError):
    """A cube/quadrilateral configuration violates its defining relations."""
