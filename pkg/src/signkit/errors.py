"""Exception types shared across the pipeline.

Every domain failure raises a subclass of :class:`SignkitError` so callers
(and the CLI) can distinguish domain errors from programming errors.
"""


class SignkitError(Exception):
    """Base class for all domain errors raised by signkit."""


class ParseError(SignkitError):
    """A record or file could not be parsed."""


class LayoutError(SignkitError):
    """Landmark count or layout does not match the declared layout."""


class OrderError(SignkitError):
    """Frame indices are not strictly increasing."""


class EmptyError(SignkitError):
    """An input that must be non-empty is empty."""


class LabelError(SignkitError):
    """A label is missing from, or not present in, the class list."""


class DuplicateError(SignkitError):
    """A path occurs more than once in a manifest."""


class DegenerateFrameError(SignkitError):
    """The normalization scale of a frame is below the allowed minimum."""


class ImputationRequiredError(SignkitError):
    """NaN landmarks reached a stage that requires imputed input."""


class TooShortError(SignkitError):
    """A sequence is too short for the requested operation."""


class ShapeError(SignkitError):
    """Tensor shapes are inconsistent for the requested operation."""


class FormatError(SignkitError):
    """A checkpoint file has a bad magic number or unsupported version."""


class CorruptError(SignkitError):
    """A checkpoint file is truncated or internally inconsistent."""


class StratifyError(SignkitError):
    """A class has too few samples for the requested split."""


class ConfigError(SignkitError):
    """A configuration value is out of its allowed range."""


class DivergenceError(SignkitError):
    """Training produced a non-finite loss."""
