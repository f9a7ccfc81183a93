"""Exception types shared across the package.

The CLI maps these onto exit codes: usage/config problems -> 1,
data problems -> 2, numerical failures -> 3.
"""


class PgTraderError(Exception):
    """Base class for all package errors."""


class ConfigError(PgTraderError):
    """Invalid or inconsistent configuration."""


class DataError(PgTraderError):
    """Problem with input market data."""


class ParseError(DataError):
    """Malformed input row; message names the offending line."""


class ValidationError(DataError):
    """Input violated a documented invariant."""


class BoundsError(PgTraderError):
    """Index or length argument out of range."""


class MaskedActionError(PgTraderError):
    """Action submitted to the environment was not legal in the state."""


class HorizonError(PgTraderError):
    """Stepped past the end of the available price data."""


class InsufficientDataError(PgTraderError):
    """Too few samples to compute the requested statistic."""


class MetricDomainError(PgTraderError):
    """Metric undefined for the given values (e.g. log of non-positive)."""


class NumericalError(PgTraderError):
    """Non-finite values encountered during training."""


class CompatibilityError(ConfigError):
    """Checkpoint and data/config do not fit together."""
