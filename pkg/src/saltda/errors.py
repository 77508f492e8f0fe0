"""Exception hierarchy shared by every saltda module."""


class SaltError(Exception):
    """Base class for all errors raised by saltda."""


class DimensionError(SaltError, ValueError):
    """Array shapes or subspace dimensions are inconsistent."""


class DomainError(SaltError, ValueError):
    """An argument lies outside the domain of the operation (bad label, non-stochastic rows)."""


class NumericalError(SaltError, ArithmeticError):
    """Non-finite input or a failed decomposition."""


class ConfigError(SaltError, ValueError):
    pass


class InsufficientDataError(SaltError, ValueError):
    pass


class EmptyRunError(SaltError):
    """A run report holds no completed outer iterations."""


class IoError(SaltError, OSError):
    pass


class ParseError(SaltError, ValueError):
    """Malformed feature file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(SaltError, ValueError):
    """Column count or stored-model dimensions do not match."""
