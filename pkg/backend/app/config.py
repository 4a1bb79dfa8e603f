"""
Configuration management for the supervised dictionary learning toolkit.
Handles environment variables, settings validation, protocol presets and logging.
"""

import logging
from typing import Dict, Any, List

import structlog
from pydantic import Field, validator

# Handle both Pydantic v1 and v2 compatibility
try:
    from pydantic import BaseSettings
except ImportError:
    from pydantic_settings import BaseSettings


LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
LOG_FORMATS = ("console", "json")


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # Core Application Settings
    PROJECT_NAME: str = "Supervised Dictionary Chord Classifier"
    VERSION: str = "1.0.0"
    ENVIRONMENT: str = Field(default="development", env="ENVIRONMENT")
    DEBUG: bool = Field(default=False, env="DEBUG")
    LOG_LEVEL: str = Field(default="INFO", env="LOG_LEVEL")
    LOG_FORMAT: str = Field(default="console", env="LOG_FORMAT")

    # Experiment Settings
    DEFAULT_SEED: int = Field(default=0, env="DEFAULT_SEED")
    DEFAULT_JOBS: int = Field(default=1, env="DEFAULT_JOBS")
    OUTPUT_DIR: str = Field(default="runs", env="OUTPUT_DIR")

    # Serving Settings
    BUNDLE_PATH: str = Field(default="runs/model.sdlm", env="BUNDLE_PATH")
    MAX_UPLOAD_SIZE: int = Field(default=20 * 1024 * 1024, env="MAX_UPLOAD_SIZE")  # 20MB
    API_V1_STR: str = "/api/v1"

    @validator("LOG_LEVEL")
    def validate_log_level(cls, v):
        v = v.upper()
        if v not in LOG_LEVELS:
            raise ValueError(f"LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}")
        return v

    @validator("LOG_FORMAT")
    def validate_log_format(cls, v):
        v = v.lower()
        if v not in LOG_FORMATS:
            raise ValueError(f"LOG_FORMAT must be one of {', '.join(LOG_FORMATS)}")
        return v

    @validator("DEFAULT_JOBS")
    def validate_jobs(cls, v):
        if v < 1:
            raise ValueError("DEFAULT_JOBS must be at least 1")
        return v

    class Config:
        env_file = ".env"
        case_sensitive = True


class ProtocolConfig:
    """Evaluation protocol presets and hyperparameter grids."""

    @staticmethod
    def get_chord_protocol() -> Dict[str, Any]:
        """Chord task: 10 splits, 2/3 of data for training, 2 validation resamples."""
        return {"split_count": 10, "train_fraction": 2.0 / 3.0, "resample_count": 2}

    @staticmethod
    def get_casr_protocol() -> Dict[str, Any]:
        """Scene task: 20 splits, 80% of data for training, 5 validation resamples."""
        return {"split_count": 20, "train_fraction": 0.8, "resample_count": 5}

    @staticmethod
    def get_full_grid() -> Dict[str, List[float]]:
        return {
            "lam": [0.1, 0.2, 0.3],
            "gamma1": [0.1, 0.2, 0.3],
            "gamma2": [0.1, 0.2, 0.3],
            "atoms_per_class": [10, 20, 30],
        }

    @staticmethod
    def get_desk_grid() -> Dict[str, List[float]]:
        return {
            "lam": [0.1, 0.3],
            "gamma1": [0.1, 0.3],
            "gamma2": [0.1, 0.3],
            "atoms_per_class": [10],
        }

    @staticmethod
    def get_optimizer_preset(full: bool) -> Dict[str, Any]:
        """Outer iterations and coding tolerances for the desk and full-scale presets."""
        if full:
            return {"iterations": 200, "coding_tol": 1e-6, "max_sweeps": 1000}
        return {"iterations": 40, "coding_tol": 1e-4, "max_sweeps": 1000}


# Global settings instance
settings = Settings()


def validate_config() -> bool:
    """Validate that the runtime configuration is usable."""
    try:
        if settings.DEFAULT_SEED < 0:
            logging.error("DEFAULT_SEED must be non-negative")
            return False

        if settings.MAX_UPLOAD_SIZE <= 0:
            logging.error("MAX_UPLOAD_SIZE must be positive")
            return False

        logging.info("Configuration validation successful")
        return True

    except Exception as e:
        logging.error(f"Configuration validation failed: {e}")
        return False


def get_logging_config() -> Dict[str, Any]:
    """Get logging configuration."""
    pre_chain = [
        structlog.stdlib.add_log_level,
        structlog.stdlib.add_logger_name,
        structlog.processors.TimeStamper(fmt="iso"),
    ]
    return {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "console": {
                "()": structlog.stdlib.ProcessorFormatter,
                "processor": structlog.dev.ConsoleRenderer(colors=False),
                "foreign_pre_chain": pre_chain,
            },
            "json": {
                "()": structlog.stdlib.ProcessorFormatter,
                "processor": structlog.processors.JSONRenderer(sort_keys=True),
                "foreign_pre_chain": pre_chain,
            },
        },
        "handlers": {
            "console": {
                "class": "logging.StreamHandler",
                "level": settings.LOG_LEVEL,
                "formatter": settings.LOG_FORMAT,
                "stream": "ext://sys.stderr",
            },
        },
        "loggers": {
            "": {
                "level": settings.LOG_LEVEL,
                "handlers": ["console"],
                "propagate": False,
            },
        },
    }
