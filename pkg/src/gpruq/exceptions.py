"""Exception types raised across the package."""


class GPRUQError(Exception):
    """Base class for package errors."""


class DegenerateGeometryError(GPRUQError, ValueError):
    """Two atoms of a structure (nearly) coincide."""


class ConfigurationError(GPRUQError, ValueError):
    """Inconsistent or invalid configuration values."""


class ConditioningError(GPRUQError, ArithmeticError):
    """Kernel matrix could not be factorized even after jitter escalation."""

    def __init__(self, message, jitter=None):
        super().__init__(message)
        self.jitter = jitter


class ParseError(GPRUQError, ValueError):
    """Malformed trajectory file."""

    def __init__(self, message, frame=None, line=None):
        where = []
        if frame is not None:
            where.append(f"frame {frame}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.frame = frame
        self.line = line
