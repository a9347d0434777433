"""Exception hierarchy shared across the package.

Each class carries the CLI exit code it maps to.
"""


class LSCError(Exception):
    exit_code = 1


class DimensionError(LSCError, ValueError):
    """Operand shapes are incompatible."""


class NumericalError(LSCError, ArithmeticError):
    """A tensor became non-finite."""

    exit_code = 3

    def __init__(self, message, tensor=None, step=None):
        super().__init__(message)
        self.tensor = tensor
        self.step = step


class ConfigurationError(LSCError, ValueError):
    """Invalid parameter value, unknown key or unsupported option."""


class UsageError(LSCError, ValueError):
    pass


class FormatError(LSCError, ValueError):
    """Malformed tensor or manifest file."""

    exit_code = 2

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
