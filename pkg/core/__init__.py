"""fleetcheck core: proactive validation for GPU fleets"""

from .dependency_check import DependencyChecker
from .errors import (
    ConfigurationError,
    DataError,
    FitError,
    FleetCheckError,
    InfeasibleError,
    InvalidInputError,
    ModelNotFittedError,
    SchemaVersionError,
)

__version__ = "1.0.0"

__all__ = [
    "DependencyChecker",
    "FleetCheckError", "InvalidInputError", "DataError", "SchemaVersionError",
    "ConfigurationError", "FitError", "ModelNotFittedError", "InfeasibleError",
]
