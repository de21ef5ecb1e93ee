"""Exception hierarchy. Every class carries a stable process exit code.

Exit code 2 is left to argparse for command-line usage errors.
"""


class SlamEvalError(Exception):
    exit_code = 1


class ArgumentError(SlamEvalError, ValueError):
    exit_code = 12


class InputNotFoundError(SlamEvalError, FileNotFoundError):
    exit_code = 3


class ParseError(SlamEvalError, ValueError):
    """A data line could not be parsed. ``line`` is 1-based."""

    exit_code = 4

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class FormatError(SlamEvalError, ValueError):
    exit_code = 5


class ConfigError(SlamEvalError, ValueError):
    exit_code = 6


class InsufficientDataError(SlamEvalError, ValueError):
    exit_code = 7

    def __init__(self, message, count=None):
        self.count = count
        super().__init__(message)


class DegenerateGeometryError(SlamEvalError, ValueError):
    exit_code = 8


class SchemaVersionError(SlamEvalError):
    exit_code = 9


class ProtocolError(SlamEvalError):
    exit_code = 10


class OutOfRangeError(SlamEvalError, ValueError):
    exit_code = 11


EXIT_CODES = {
    cls.__name__: cls.exit_code
    for cls in (
        SlamEvalError,
        ArgumentError,
        InputNotFoundError,
        ParseError,
        FormatError,
        ConfigError,
        InsufficientDataError,
        DegenerateGeometryError,
        SchemaVersionError,
        ProtocolError,
        OutOfRangeError,
    )
}
