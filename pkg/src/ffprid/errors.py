"""Shared exception types."""


class ValidationError(ValueError):
    """Raised when an input file, record, or parameter violates its contract."""
