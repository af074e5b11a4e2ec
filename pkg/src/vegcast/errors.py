"""Exception hierarchy shared across the package.

Each class carries the process exit code the CLI maps it to.
"""


class VegcastError(Exception):
    exit_code = 1


class ConfigError(VegcastError):
    """Invalid configuration or command-line arguments."""

    exit_code = 2


class DataError(VegcastError):
    """Malformed, inconsistent, or insufficient input data."""

    exit_code = 3


class NumericalError(VegcastError):
    """Degenerate fit, divergence, or other numerical failure."""

    exit_code = 4
