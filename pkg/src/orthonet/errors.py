"""Exception hierarchy shared by all orthonet modules.

The CLI maps :class:`DataError` to exit code 3 and :class:`NumericError`
to exit code 4.
"""


class OrthonetError(Exception):
    """Base class for all errors raised by this package."""


class DataError(OrthonetError, ValueError):
    """Input data is malformed, inconsistent or missing."""


class NumericError(OrthonetError, ValueError):
    """A numerical precondition failed (zero extent, degenerate frame, ...)."""


class ParseError(DataError):
    """A file could not be parsed. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        self.reason = message
        super().__init__(f"line {line}: {message}" if line is not None else message)


class UnsupportedFormatError(ParseError):
    pass


class SchemaError(ParseError):
    pass
