"""Exception hierarchy shared by every sdmpose module."""


class SDMError(Exception):
    """Base class for all sdmpose errors."""

    exit_code = 1


class InvalidPose(SDMError, ValueError):
    exit_code = 10


class DimensionMismatch(SDMError, ValueError):
    exit_code = 11


class NotCentered(SDMError, ValueError):
    exit_code = 12


class DegenerateGeometry(SDMError, ArithmeticError):
    """Geometry is too degenerate for a unique rotation (rank deficiency)."""

    exit_code = 13


class SingularSystem(SDMError, ArithmeticError):
    exit_code = 14


class InvalidDictionary(SDMError, ValueError):
    exit_code = 15


class EmptyTrainingSet(SDMError, ValueError):
    exit_code = 16


class EmptyBatch(SDMError, ValueError):
    exit_code = 17


class ParseError(SDMError, ValueError):
    """Malformed record in a data file; carries the offending line number."""

    exit_code = 18

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class SchemaMismatch(SDMError, ValueError):
    exit_code = 19


class ConfigError(SDMError, ValueError):
    exit_code = 20


class IoError(SDMError, OSError):
    exit_code = 21
