"""Shared exception types."""


class DataError(Exception):
    """Invalid input data: malformed records, broken invariants, unknown ids."""


class FormatError(DataError):
    """A binary file does not match its on-disk grammar."""
