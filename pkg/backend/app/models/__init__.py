"""
Models package initialization.
"""

from .audio import FeatureKind, AudioClip, Spectrogram, FeatureVector, FeaturePipelineConfig
from .chords import ChordType, InstrumentProfile, ChordDatasetConfig, LabeledClip
from .dictionary import (
    DictionarySet, SparseCode, CodingParams, HyperParams, KsvdParams,
    ObjectiveBreakdown, TraceRow, FitTrace, SimilaritySummary
)
from .classifier import LinearSvmModel
from .bundle import ModelBundle, FeatureSet
from .experiment import (
    HyperGrid, SplitSpec, ExperimentConfig, GridPointResult, EvalReport,
    MethodResult, ExperimentReport, TrainingResult
)

__all__ = [
    # Audio Models
    "FeatureKind", "AudioClip", "Spectrogram", "FeatureVector", "FeaturePipelineConfig",

    # Chord Models
    "ChordType", "InstrumentProfile", "ChordDatasetConfig", "LabeledClip",

    # Dictionary Models
    "DictionarySet", "SparseCode", "CodingParams", "HyperParams", "KsvdParams",
    "ObjectiveBreakdown", "TraceRow", "FitTrace", "SimilaritySummary",

    # Classifier and Persistence Models
    "LinearSvmModel", "ModelBundle", "FeatureSet",

    # Experiment Models
    "HyperGrid", "SplitSpec", "ExperimentConfig", "GridPointResult", "EvalReport",
    "MethodResult", "ExperimentReport", "TrainingResult"
]
