"""Exception hierarchy shared by every module."""


class SageError(Exception):
    """Base class; ``code`` is the machine-readable tag the CLI prints."""

    code = "error"


class DimensionError(SageError, ValueError):
    code = "dimension"


class InvalidValueError(SageError, ValueError):
    code = "invalid-value"


class ConfigurationError(SageError, ValueError):
    code = "config"


class UsageError(SageError, ValueError):
    code = "usage"


class UnsupportedPolicyError(UsageError):
    code = "unsupported-policy"


class LogFormatError(SageError, ValueError):
    code = "log-format"
