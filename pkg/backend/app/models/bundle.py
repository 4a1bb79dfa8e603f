"""
Persisted pipeline models.
A bundle holds everything needed to classify a new clip; a feature set holds a labeled matrix.
"""

import numpy as np
from pydantic import BaseModel, Field, validator, root_validator

from app.models.audio import FeaturePipelineConfig
from app.models.classifier import LinearSvmModel
from app.models.dictionary import DictionarySet, HyperParams

FORMAT_VERSION = 1


class ModelBundle(BaseModel):
    """Learned dictionaries, the SVM on their codes and the feature pipeline."""

    dictionary: DictionarySet
    svm: LinearSvmModel
    hyperparams: HyperParams
    pipeline: FeaturePipelineConfig
    version: int = FORMAT_VERSION

    @root_validator(skip_on_failure=True)
    def validate_shapes(cls, values):
        dictionary, svm = values["dictionary"], values["svm"]
        if svm.n_features != dictionary.n_atoms:
            raise ValueError("SVM feature count must equal the dictionary atom count")
        if svm.n_classes != dictionary.n_classes:
            raise ValueError("one binary machine per class dictionary is required")
        if dictionary.dim != values["pipeline"].dim:
            raise ValueError("dictionary dimension must match the feature pipeline")
        return values


class FeatureSet(BaseModel):
    """N x M feature matrix with 1-based class labels."""

    features: np.ndarray
    labels: np.ndarray
    pipeline: FeaturePipelineConfig
    n_classes: int = Field(..., ge=1)

    class Config:
        arbitrary_types_allowed = True

    @validator("features", pre=True)
    def validate_features(cls, v):
        v = np.array(v, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("features must be an N x M matrix")
        if not np.all(np.isfinite(v)):
            raise ValueError("features must be finite")
        return v

    @validator("labels", pre=True)
    def validate_labels(cls, v):
        return np.array(v, dtype=np.int64).reshape(-1)

    @root_validator(skip_on_failure=True)
    def validate_rows(cls, values):
        features, labels = values["features"], values["labels"]
        if features.shape[0] != labels.shape[0]:
            raise ValueError("one label per feature row is required")
        if labels.size and (labels.min() < 1 or labels.max() > values["n_classes"]):
            raise ValueError("labels must lie in 1..n_classes")
        if features.shape[1] != values["pipeline"].dim:
            raise ValueError("feature width must match the pipeline dimension")
        return values

    @property
    def size(self) -> int:
        return int(self.labels.size)
