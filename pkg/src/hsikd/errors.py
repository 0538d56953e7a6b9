"""Exception hierarchy shared by all modules.

The CLI maps these onto stable exit codes: validation-type errors exit 1,
IO/format errors exit 2, numeric failures exit 3.
"""


class HsikdError(Exception):
    """Base class for all package errors."""


class ValidationError(HsikdError):
    """Precondition or invariant violated by caller-supplied data."""


class DimensionError(ValidationError):
    """Array shapes are incompatible with the requested operation."""


class SplitError(ValidationError):
    """A class cannot be split into train and test as requested."""


class FormatError(HsikdError):
    """On-disk data does not match its declared format."""


class ConvergenceError(HsikdError):
    """An iterative solver exhausted its iteration budget."""


class UpdateError(HsikdError):
    """An optimizer step was aborted (non-finite gradients or loss)."""


class GenerationError(HsikdError):
    """Synthetic data generation could not satisfy its constraints."""


class UndefinedKappaError(HsikdError):
    """Kappa is undefined because expected agreement equals 1."""
