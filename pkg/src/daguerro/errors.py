"""Exception types shared across the package.

The CLI maps these onto exit codes (config 2, data 3, numeric 4), so library
code should raise the most specific one that applies.
"""


class DaguerroError(Exception):
    """Base class for package-specific failures."""


class ConfigError(DaguerroError, ValueError):
    """An option combination or specification that cannot be run."""


class DataError(DaguerroError, ValueError):
    """Malformed input data or files."""


class NumericError(DaguerroError, RuntimeError):
    """Training diverged or produced non-finite values."""
