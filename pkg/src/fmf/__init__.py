"""Household-level short-term load forecasting with SVD hour embeddings and calendar-matched clusters."""
from ._accel import backend_name
from .errors import CoverageError, FMFError, InputError, InvariantError, TimestampError

__version__ = "0.1.0"

__all__ = [
    "CoverageError",
    "FMFError",
    "InputError",
    "InvariantError",
    "TimestampError",
    "backend_name",
    "__version__",
]
