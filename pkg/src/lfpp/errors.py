"""Exception hierarchy shared across the package."""


class LfppError(Exception):
    """Base class for all package errors."""


class GeometryError(LfppError):
    """A query's geometry does not fit on the grid (circle exits the window,
    annulus too thin, point outside its mask, ...)."""


class ResolutionError(LfppError):
    """A length scale is unresolvable at the grid spacing."""


class StateError(LfppError):
    """An operation was applied to an object in the wrong state."""


class DataError(LfppError):
    """Invalid numeric data (non-finite values, empty sample sets, ...)."""


class RangeError(LfppError):
    """A computed quantity left its safe numeric range."""


class DomainError(LfppError):
    """An argument is outside the mathematical domain of the function."""
