"""
Experiment configuration and report models.
ExperimentConfig is the documented schema of JSON/YAML config files.
"""

import itertools
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, validator, root_validator

from app.config import ProtocolConfig
from app.models.audio import FeatureKind, FeaturePipelineConfig
from app.models.chords import ChordDatasetConfig
from app.models.bundle import ModelBundle
from app.models.dictionary import HyperParams, KsvdParams, FitTrace


def log_grid(low: float = 1e-3, high: float = 100.0, count: int = 10) -> List[float]:
    """Logarithmically spaced regularization values, inclusive of both ends."""
    return [float(v) for v in np.logspace(np.log10(low), np.log10(high), count)]


class HyperGrid(BaseModel):
    """Candidate values searched by validation resampling; mu stays fixed."""

    lam: List[float] = Field(default_factory=lambda: ProtocolConfig.get_desk_grid()["lam"], min_items=1)
    gamma1: List[float] = Field(default_factory=lambda: ProtocolConfig.get_desk_grid()["gamma1"], min_items=1)
    gamma2: List[float] = Field(default_factory=lambda: ProtocolConfig.get_desk_grid()["gamma2"], min_items=1)
    atoms_per_class: List[int] = Field(
        default_factory=lambda: ProtocolConfig.get_desk_grid()["atoms_per_class"], min_items=1
    )

    @classmethod
    def full(cls) -> "HyperGrid":
        return cls(**ProtocolConfig.get_full_grid())

    def points(self) -> List[Dict[str, float]]:
        """Grid points in a fixed order (atoms, lambda, gamma1, gamma2)."""
        return [
            {"atoms_per_class": k, "lam": lam, "gamma1": g1, "gamma2": g2}
            for k, lam, g1, g2 in itertools.product(
                self.atoms_per_class, self.lam, self.gamma1, self.gamma2
            )
        ]

    @property
    def size(self) -> int:
        return len(self.atoms_per_class) * len(self.lam) * len(self.gamma1) * len(self.gamma2)


class SplitSpec(BaseModel):
    """Train/test splitting and validation resampling protocol."""

    train_fraction: float = Field(default=2.0 / 3.0, gt=0, lt=1)
    split_count: int = Field(default=10, ge=1)
    resample_count: int = Field(default=2, ge=1)

    @classmethod
    def for_protocol(cls, name: str) -> "SplitSpec":
        if name == "casr":
            return cls(**ProtocolConfig.get_casr_protocol())
        return cls(**ProtocolConfig.get_chord_protocol())


class ExperimentConfig(BaseModel):
    """Full description of a train/evaluate experiment."""

    dataset: Optional[ChordDatasetConfig] = Field(None, description="Synthetic chord dataset")
    features_path: Optional[str] = Field(None, description="Prepared SDLM feature file")
    pipeline: FeaturePipelineConfig = Field(default_factory=FeaturePipelineConfig)
    grid: HyperGrid = Field(default_factory=HyperGrid)
    base: HyperParams = Field(
        default_factory=lambda: HyperParams(**ProtocolConfig.get_optimizer_preset(full=False))
    )
    ksvd: KsvdParams = Field(default_factory=KsvdParams)
    splits: SplitSpec = Field(default_factory=SplitSpec)
    c_grid: List[float] = Field(default_factory=log_grid, min_items=1)
    baselines: List[FeatureKind] = Field(
        default_factory=lambda: [
            FeatureKind.CHROMA, FeatureKind.INTERPOLATED_PSD, FeatureKind.POOLED_SPECTROGRAM
        ]
    )
    seed: int = Field(default=0, ge=0)

    @validator("c_grid", each_item=True)
    def validate_c(cls, v):
        if v <= 0:
            raise ValueError("SVM regularization values must be positive")
        return v

    @root_validator(skip_on_failure=True)
    def validate_source(cls, values):
        if values.get("dataset") is not None and values.get("features_path"):
            raise ValueError("give either a chord dataset or a feature file, not both")
        return values


class GridPointResult(BaseModel):
    """Validation outcome of one hyperparameter combination."""

    index: int
    params: Dict[str, float]
    validation_scores: List[float] = Field(..., description="Best accuracy per resample")
    best_c: float

    @property
    def validation_mean(self) -> float:
        return float(np.mean(self.validation_scores))


class EvalReport(BaseModel):
    """Accuracy figures of one model on one labeled test set."""

    accuracy: float
    per_class_accuracy: List[float]
    confusion: List[List[int]]
    test_count: int


class MethodResult(BaseModel):
    """Accuracy of one method across all splits."""

    method: str
    accuracies: List[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        if len(self.accuracies) < 2:
            return 0.0
        return float(np.std(self.accuracies, ddof=1))

    @property
    def formatted(self) -> str:
        return f"{self.mean:.2f} ± {self.std:.2f}"


class ExperimentReport(BaseModel):
    """Comparison table of all methods over identical splits."""

    methods: List[MethodResult]
    similarity: Optional[List[List[float]]] = None
    selected_params: List[Dict[str, float]] = Field(default_factory=list)

    def method(self, name: str) -> MethodResult:
        for result in self.methods:
            if result.method == name:
                return result
        raise KeyError(name)


class TrainingResult(BaseModel):
    """Outcome of training: the persisted bundle plus what led to it."""

    bundle: ModelBundle
    trace: FitTrace
    grid_results: List[GridPointResult] = Field(default_factory=list)
    selected_params: Dict[str, float]
