"""
Error types shared by the services, the CLI and the API.
Every error carries a stable code and a context dict for structured reporting.
"""

from typing import Any, Dict, Optional


class SDLError(Exception):
    """Base class for all toolkit errors."""

    code = "sdl_error"

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context = dict(context or {})

    def to_dict(self) -> Dict[str, Any]:
        """Structured form used by the CLI error line and the API handlers."""
        return {"error": self.code, "message": self.message, "context": self.context}


class ConfigError(SDLError):
    code = "config_error"


class FeatureError(SDLError):
    code = "feature_error"


class DatasetError(SDLError):
    code = "dataset_error"


class SolverError(SDLError):
    code = "solver_error"


class StoreError(SDLError):
    code = "store_error"
