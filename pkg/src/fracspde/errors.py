"""Exception types shared across the package."""


class FracSpdeError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(FracSpdeError, ValueError):
    """A scalar or config parameter is outside its admissible range."""


class OutOfRangeError(FracSpdeError, ValueError):
    """An evaluation was requested outside the validated range."""


class ShapeError(FracSpdeError, ValueError):
    """Mismatched dimensions, cutoffs or grids between operands."""


class InvalidInputError(FracSpdeError, ValueError):
    """An input object violates a precondition of the operation."""
