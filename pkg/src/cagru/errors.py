"""Exception hierarchy shared by every module.

Each top-level family carries the process exit code the CLI maps it to.
"""


class CagruError(Exception):
    exit_code = 1


class ConfigError(CagruError, ValueError):
    exit_code = 2


class UsageError(CagruError, RuntimeError):
    exit_code = 2


class NotFoundError(CagruError, LookupError):
    """Unknown preset name, customer id, or similar lookup key."""

    exit_code = 2

    def __str__(self):
        # LookupError/KeyError would otherwise repr() the message
        return str(self.args[0]) if self.args else ""


class DataError(CagruError, ValueError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class EmptyDatasetError(DataError):
    pass


class IntegrityError(DataError):
    pass


class ValidationError(DataError):
    pass


class TooShortError(DataError):
    pass


class EmptyWindowError(DataError):
    pass


class DimensionError(DataError):
    pass


class EmptyInputError(DataError):
    pass


class UnknownPatternError(DataError):
    pass


class DegenerateSeriesError(DataError):
    pass


class EmptyClusterError(DataError):
    pass


class NumericError(CagruError, ArithmeticError):
    exit_code = 4
