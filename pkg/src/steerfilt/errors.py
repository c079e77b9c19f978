"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: parameter/usage problems -> 1,
data problems (missing files, bad manifests, incompatible checkpoints) -> 2,
numeric failures -> 3.
"""


class SteerfiltError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(SteerfiltError, ValueError):
    """Invalid argument or configuration value."""


class ShapeError(ParameterError):
    """Array dimensions inconsistent with the declared contract."""


class StateError(ParameterError):
    """Object used in the wrong state (e.g. compressed mask where an
    uncompressed one is required)."""


class DataError(SteerfiltError):
    """Missing or malformed external data (files, manifests, checkpoints)."""


class NumericError(SteerfiltError):
    """Non-finite values or numerically impossible request."""


class NormalizationError(NumericError):
    """Signal too silent to normalize."""


class EstimationError(NumericError):
    """An estimator could not produce a meaningful value."""
