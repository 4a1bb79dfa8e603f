"""
Utils package initialization.
"""

from .errors import (
    SDLError, ConfigError, FeatureError, DatasetError, SolverError, StoreError
)
from .parallel import derive_seed, run_jobs

__all__ = [
    "SDLError", "ConfigError", "FeatureError", "DatasetError", "SolverError", "StoreError",
    "derive_seed", "run_jobs",
]
