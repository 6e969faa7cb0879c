"""Exception hierarchy shared across the package."""


class AvsiError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(AvsiError):
    """Input violates a documented precondition (shape, emptiness, range)."""


class ConfigError(AvsiError):
    """Configuration values are inconsistent (dims, divisibility, widths)."""


class NumericalDegeneracy(AvsiError):
    """A numerically ill-posed state was reached (zero normalizer, NaN)."""


class InfeasiblePlacement(AvsiError):
    """No gap placement satisfies the requested policy."""


class StateError(AvsiError):
    """An object is in the wrong state for the requested operation."""


class FormatError(AvsiError):
    """A file does not conform to its binary/text format contract."""


class UndefinedMetric(AvsiError):
    """The metric is undefined for this input (e.g. all-silent signal)."""
