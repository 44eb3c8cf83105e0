"""Exception types shared across the package."""


class ZoomPropError(Exception):
    """Base class for all zoomprop errors."""


class InvalidBoxError(ZoomPropError):
    """A box has non-positive width or height."""


class EmptyResultError(ZoomPropError):
    """A window generator produced no windows for any configured scale."""


class OutOfBoundsError(ZoomPropError):
    """A region lies entirely outside the feature extent."""


class FormatError(ZoomPropError):
    """A binary file failed magic, version, or dimension validation."""


class DimensionMismatchError(ZoomPropError):
    """An array does not have the shape a model or renderer expects."""


class NonFiniteError(ZoomPropError):
    """A loss input contains NaN or infinity."""


class InsufficientDataError(ZoomPropError):
    """Too few images or regions of interest to assemble training batches."""


class GenerationFailureError(ZoomPropError):
    """Scene generation exhausted its retry budget for non-overlapping boxes."""


class ModelMismatchError(ZoomPropError):
    """Model input width does not match the pooling configuration."""
