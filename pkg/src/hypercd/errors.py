"""Exception types shared across the package."""


class HypercdError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(HypercdError):
    """A file or value does not conform to its declared format."""


class DimensionError(HypercdError):
    """Array shapes are incompatible for the requested operation."""


class ParameterError(HypercdError):
    """A parameter violates its documented range or relationship."""


class DegenerateGraphError(HypercdError):
    """A hypergraph has a zero vertex or edge degree."""


class TrainingError(HypercdError):
    """Training failed (divergence, bad setup, missing labels)."""
