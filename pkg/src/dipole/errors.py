"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration and input problems
exit with 2, training or fitting failures with 3, and degenerate data
(for example identical embeddings that cannot be clustered) with 4.
"""


class DipoleError(Exception):
    """Base class for all package errors."""


class ConfigError(DipoleError):
    """Invalid configuration value, unknown key, or unusable combination."""


class GraphParseError(DipoleError):
    """Malformed input file; the message carries file and line context."""


class ValidationError(DipoleError):
    """Structurally valid input that violates a documented precondition."""


class DegenerateDataError(DipoleError):
    """Data without enough variation to support the requested operation."""


class TrainingError(DipoleError):
    """Optimization diverged or produced non-finite values."""


class FitError(DipoleError):
    """A supervised fit could not be performed (for example one class missing)."""


class EvaluationError(DipoleError):
    """An evaluation has no usable nodes or an inconsistent setup."""
