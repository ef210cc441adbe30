"""Exception types shared across the package."""


class OmiclustError(Exception):
    """Base class for all package errors."""


class ValidationError(OmiclustError, ValueError):
    """Bad input data or a violated call precondition."""


class ConfigError(OmiclustError, ValueError):
    """Invalid configuration (ranges, counts, incompatible options)."""


class ParseError(OmiclustError, ValueError):
    """Malformed input file.

    Carries enough location detail (path, line) to point at the offending
    spot in the file.
    """

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}: "
        if line is not None:
            loc += f"line {line}: "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class NumericalError(OmiclustError, ArithmeticError):
    """A linear-algebra step failed or produced non-finite values."""
