"""Shared exception hierarchy with stable identifiers for machine-readable output"""


class SqkdError(Exception):
    """Base error; `code` is the stable identifier printed by the CLI"""

    code = "sqkd_error"


class SizeError(SqkdError, ValueError):
    code = "size_error"


class ArgumentError(SqkdError, ValueError):
    code = "argument_error"


class ValidationError(SqkdError, ValueError):
    code = "validation_error"


class ConfigError(SqkdError, ValueError):
    code = "config_error"


class InvariantError(SqkdError):
    """Raised when a simulated quantity breaks a physical law it must obey"""

    code = "invariant_error"
