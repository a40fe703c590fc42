"""Exception types shared across the toolkit."""


class FecmcastError(Exception):
    """Base class for all toolkit errors."""


class DomainError(FecmcastError, ValueError):
    """Input values outside the mathematical domain of an operation."""


class ContractError(FecmcastError, ValueError):
    """Caller violated an operation's precondition."""


class ConfigError(FecmcastError, ValueError):
    """Invalid or incomplete configuration/metadata."""


class NumericError(FecmcastError, RuntimeError):
    """Numerical failure (singular matrix, degenerate data)."""


class UnsupportedDimensionError(FecmcastError, ValueError):
    """System dimension outside the coverage of embedded statistical tables."""
