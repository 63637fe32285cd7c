"""Exception bases shared across the package.

Concrete error classes live next to the code that raises them; the three
bases here exist so the command line can map any failure to a stable exit
code (config -> 2, data -> 3, numerical -> 4).
"""


class PhylinkError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(PhylinkError):
    """Invalid configuration value, flag combination, or parameter domain."""


class DataError(PhylinkError):
    """Malformed or inconsistent input data."""


class NumericalError(PhylinkError):
    """A numerical routine produced non-finite or impossible values."""
