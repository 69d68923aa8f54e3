"""Exception hierarchy for bis-region. Each class carries its CLI exit code."""


class BisError(Exception):
    exit_code = 1


class ConfigError(BisError, ValueError):
    exit_code = 2


class InvalidArgumentError(BisError, ValueError):
    exit_code = 2


class InfeasibleError(BisError):
    """Requested rates lie outside what the test channel can support."""
    exit_code = 2


class NumericalFailureError(BisError):
    exit_code = 3


class ResourceLimitError(BisError):
    """Codebook or parameter size above the desk-scale caps."""
    exit_code = 4
