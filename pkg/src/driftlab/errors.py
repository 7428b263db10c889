"""Exception types shared across the package."""


class DriftLabError(Exception):
    """Base class for all library errors."""


class InvalidInputError(DriftLabError):
    """An argument violates a documented precondition."""


class DegenerateLogError(DriftLabError):
    """Logarithm map requested for a near-antipodal pair (direction undefined)."""


class DegenerateProjectionError(DriftLabError):
    """Manifold projection requested for a vector too close to zero."""


class UnderflowError_(DriftLabError):
    """All kernel weights underflowed; the drift is undefined."""


class UndefinedCorrelationError(DriftLabError):
    """Pearson correlation undefined because one input has zero variance."""
