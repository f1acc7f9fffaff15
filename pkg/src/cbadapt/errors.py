"""Exception types shared across the package.

Each class carries the process exit code the CLI maps it to.
"""


class CbadaptError(Exception):
    exit_code = 1


class ConfigError(CbadaptError, ValueError):
    """Invalid configuration or out-of-range argument."""

    exit_code = 1


class DataFormatError(CbadaptError):
    """Malformed or version-mismatched input file."""

    exit_code = 2

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class NumericalError(CbadaptError, ArithmeticError):
    """Degenerate numerical input (zero channel, singular system)."""

    exit_code = 3
