"""Exception types shared across the package.

The CLI maps each class to a process exit code.
"""


class SteinGaugeError(Exception):
    """Base class for all package errors."""


class InputError(SteinGaugeError, ValueError):
    """Malformed or out-of-range input (wrong shape, nonpositive weight, ...)."""


class ConfigError(InputError):
    """A simulation or solver configuration violates a precondition."""


class NumericError(SteinGaugeError, ArithmeticError):
    """A computation produced non-finite values."""
