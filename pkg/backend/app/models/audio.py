"""
Audio and feature models.
Defines clips, magnitude spectrograms, feature vectors and the feature pipeline config.
"""

from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field, validator, root_validator


class FeatureKind(str, Enum):
    """Signal representations fed to dictionary learning or to the baselines."""

    POOLED_SPECTROGRAM = "pooled_spectrogram"
    CHROMA = "chroma"
    INTERPOLATED_PSD = "interpolated_psd"


class AudioClip(BaseModel):
    """Mono audio buffer with its sample rate."""

    samples: np.ndarray = Field(..., description="Amplitudes, expected range [-1, 1]")
    sample_rate: int = Field(..., gt=0, description="Sample rate in Hz")

    class Config:
        arbitrary_types_allowed = True

    @validator("samples", pre=True)
    def validate_samples(cls, v):
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("samples must be a 1-D array")
        if v.size == 0:
            raise ValueError("samples must be non-empty")
        return v

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


class Spectrogram(BaseModel):
    """Magnitude spectrogram, F frequency bins by T frames."""

    magnitudes: np.ndarray = Field(..., description="F x T non-negative magnitudes")
    sample_rate: int = Field(..., gt=0)
    window_size: int = Field(..., gt=0)
    hop: int = Field(..., ge=1)

    class Config:
        arbitrary_types_allowed = True

    @validator("magnitudes", pre=True)
    def validate_magnitudes(cls, v):
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("magnitudes must be a 2-D array")
        if np.any(v < 0):
            raise ValueError("magnitudes must be non-negative")
        return v

    @root_validator(skip_on_failure=True)
    def validate_bins(cls, values):
        bins = values["magnitudes"].shape[0]
        if bins != values["window_size"] // 2 + 1:
            raise ValueError("bin count must equal window_size / 2 + 1")
        return values

    @property
    def bin_hz(self) -> float:
        """Frequency spacing between consecutive bins."""
        return self.sample_rate / self.window_size

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.magnitudes.shape[0]) * self.bin_hz


class FeatureVector(BaseModel):
    """Fixed-length signal representation."""

    values: np.ndarray
    kind: FeatureKind

    class Config:
        arbitrary_types_allowed = True

    @validator("values", pre=True)
    def validate_values(cls, v):
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("feature values must be a 1-D array")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature values must be finite")
        return v

    @property
    def dim(self) -> int:
        return int(self.values.size)


class FeaturePipelineConfig(BaseModel):
    """Everything needed to turn a clip into the feature vector a model expects."""

    kind: FeatureKind = FeatureKind.POOLED_SPECTROGRAM
    dim: int = Field(default=256, gt=0, description="Output length M")
    window_size: int = Field(default=4096, gt=1)
    hop: int = Field(default=32, ge=1)
    fmin: float = Field(default=55.0, gt=0)
    fmax: float = Field(default=8000.0, gt=0)
    note_count: int = Field(default=96, gt=0)
    base_midi: int = Field(default=24, ge=0, le=127)
    decimation: int = Field(default=1, ge=1)

    @root_validator(skip_on_failure=True)
    def validate_kind_dim(cls, values):
        kind = values["kind"]
        if kind == FeatureKind.CHROMA:
            values["dim"] = 12
        elif kind == FeatureKind.INTERPOLATED_PSD:
            values["dim"] = values["note_count"]
        if values["fmin"] >= values["fmax"]:
            raise ValueError("fmin must be below fmax")
        return values

    def with_kind(self, kind: FeatureKind, dim: Optional[int] = None) -> "FeaturePipelineConfig":
        """Copy of this pipeline producing another feature kind."""
        data = self.dict()
        data["kind"] = kind
        if dim is not None:
            data["dim"] = dim
        return FeaturePipelineConfig(**data)
