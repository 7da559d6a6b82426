"""Exception hierarchy shared by every module."""


class AnfbError(Exception):
    """Base class for simulator errors."""


class ConfigError(AnfbError, ValueError):
    """Invalid or inconsistent configuration."""


class OrderingError(AnfbError, ValueError):
    """A transaction arrived with a timestamp earlier than its predecessor."""


class DimensionError(AnfbError, ValueError):
    """Vector dimensions do not match the model."""


class NonFiniteError(AnfbError, ValueError):
    """NaN or infinite value where a finite number is required."""


class CoverageError(AnfbError, ArithmeticError):
    """No fuzzy rule fired, so the weighted mean is undefined."""


class ChainError(AnfbError):
    """Block does not link onto the ledger tip."""


class AuthorizationError(AnfbError):
    """Block lacks the required validator signatures."""


class SchemaError(AnfbError, ValueError):
    """Input file does not follow the expected schema."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class UndefinedMetricError(AnfbError, ZeroDivisionError):
    """A metric's denominator is zero; the value is not applicable."""
