"""
Exceptions raised by dssl, and the exit code each one maps to on the command line.
"""


class DsslError(Exception):
    """Base class for all dssl errors."""

    exit_code = 1


class ShapeError(DsslError, ValueError):
    """Operand shapes do not conform for the requested operation."""

    exit_code = 2


class NumericalError(DsslError, ArithmeticError):
    """A non-finite value or an out-of-domain input was encountered."""

    exit_code = 3


class GraphParseError(DsslError):
    """An input file could not be parsed into a graph."""

    exit_code = 4

    def __init__(self, path: str, line: int, message: str):
        self.path = str(path)
        self.line = line
        self.message = message
        super().__init__(f"{path}:{line}: {message}")


class GraphError(DsslError, ValueError):
    """A graph does not meet the preconditions of an operation."""

    exit_code = 2


class SyntheticSpecError(DsslError, ValueError):
    """A synthetic graph specification cannot be realised."""

    exit_code = 2


class ConfigError(DsslError, ValueError):
    """A configuration key is unknown or its value is invalid."""

    exit_code = 2

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class ProbeError(DsslError, ValueError):
    """The linear probe cannot be trained on the given split."""

    exit_code = 2


class CheckpointError(DsslError):
    """A checkpoint is malformed or does not match the graph it is used with."""

    exit_code = 4


EXIT_CODES = {
    "success": 0,
    "usage": 2,
    "numerical": 3,
    "io": 4,
}


def exit_code_for(error: BaseException) -> int:
    """
    Determine the process exit code for an exception.

    Args:
        error (BaseException): The exception that stopped a command

    Returns:
        int: The exit code (2 usage/config, 3 numerical, 4 I/O)
    """
    if isinstance(error, DsslError):
        return error.exit_code
    if isinstance(error, OSError):
        return EXIT_CODES["io"]
    # click usage errors carry their own code
    code = getattr(error, "exit_code", None)
    return code if isinstance(code, int) else 1
