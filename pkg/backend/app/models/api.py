"""
API request and response models.
"""

from datetime import datetime
from typing import Dict, List, Optional, Any

from pydantic import BaseModel, Field, validator

from app.models.audio import FeaturePipelineConfig
from app.models.dictionary import SimilaritySummary


class ClassifyRequest(BaseModel):
    """Feature vectors produced with the bundle's pipeline."""

    features: List[List[float]] = Field(..., min_items=1)

    @validator("features")
    def validate_rectangular(cls, v):
        if len({len(row) for row in v}) != 1:
            raise ValueError("all feature vectors must have the same length")
        return v


class Prediction(BaseModel):
    label: int
    name: Optional[str] = None
    scores: List[float]


class ClassifyResponse(BaseModel):
    predictions: List[Prediction]


class BundleInfo(BaseModel):
    """Shapes and settings of the loaded model bundle."""

    path: Optional[str]
    version: int
    n_classes: int
    atoms_per_class: int
    dim: int
    c_svm: float
    hyperparams: Dict[str, Any]
    pipeline: FeaturePipelineConfig


class SimilarityResponse(BaseModel):
    matrix: List[List[float]]
    summary: SimilaritySummary


class HealthCheck(BaseModel):
    """Model for health check responses."""

    status: str
    timestamp: datetime
    version: str
    environment: str
    services: Dict[str, str]
