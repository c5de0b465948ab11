"""Exception types shared across the package."""


class LoanBoostError(Exception):
    """Base class for all errors raised by loanboost."""


class ParseError(LoanBoostError, ValueError):
    """Malformed input file (bad cell count, unparseable value)."""


class SchemaError(LoanBoostError, ValueError):
    """Input is well-formed but does not match the expected schema."""


class ConfigError(LoanBoostError, ValueError):
    """Invalid configuration value."""
