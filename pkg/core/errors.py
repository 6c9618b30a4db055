"""
Errors - Exception hierarchy shared by all toolkit modules
Each error carries the CLI exit code it maps to
"""

from typing import Optional


class FleetCheckError(Exception):
    """Base class for every toolkit error"""

    exit_code = 1


class InvalidInputError(FleetCheckError, ValueError):
    """A pure operation was called with input violating its preconditions"""

    exit_code = 3


class DataError(FleetCheckError):
    """A data file or document failed to parse"""

    exit_code = 3

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class SchemaVersionError(DataError):
    """Header schema name or version does not match what the reader expects"""


class ConfigurationError(FleetCheckError):
    """Missing or inconsistent configuration (criteria, workspace paths, config keys)"""

    exit_code = 3


class FitError(FleetCheckError):
    """A probability model could not be fitted from the given data"""

    exit_code = 4


class ModelNotFittedError(FitError):
    """A command needs a fitted model that does not exist yet"""


class InfeasibleError(FleetCheckError):
    """A plan or topology cannot satisfy its constraints"""

    exit_code = 4


__all__ = [
    "FleetCheckError", "InvalidInputError", "DataError", "SchemaVersionError",
    "ConfigurationError", "FitError", "ModelNotFittedError", "InfeasibleError",
]
