"""
Shared fixtures for the test suite.
"""

import sys
from pathlib import Path

import hypothesis
import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from app.models.audio import AudioClip, FeatureKind, FeaturePipelineConfig  # noqa: E402
from app.models.bundle import ModelBundle, FeatureSet  # noqa: E402
from app.models.classifier import LinearSvmModel  # noqa: E402
from app.models.dictionary import DictionarySet, HyperParams  # noqa: E402
from app.services.dictionary_service import dictionary_service  # noqa: E402

hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("default", max_examples=25, deadline=None)
hypothesis.settings.load_profile("default")


def sine(freq: float, sample_rate: int = 22050, duration: float = 1.0, amplitude: float = 0.5) -> AudioClip:
    t = np.arange(int(sample_rate * duration)) / sample_rate
    return AudioClip(samples=amplitude * np.sin(2 * np.pi * freq * t), sample_rate=sample_rate)


def random_dictionary(rng: np.random.Generator, dim: int, n_classes: int, atoms_per_class: int) -> DictionarySet:
    atoms = rng.standard_normal((dim, n_classes * atoms_per_class))
    atoms /= np.linalg.norm(atoms, axis=0)
    return DictionarySet(atoms=atoms, n_classes=n_classes)


def make_bundle(
    seed: int = 0,
    n_classes: int = 3,
    atoms_per_class: int = 2,
    pipeline: FeaturePipelineConfig = None,
) -> ModelBundle:
    """Random but valid bundle; atoms are projected onto the unit ball."""
    rng = np.random.default_rng(seed)
    pipeline = pipeline or FeaturePipelineConfig(kind=FeatureKind.POOLED_SPECTROGRAM, dim=8)
    raw = rng.standard_normal((pipeline.dim, n_classes * atoms_per_class)) * rng.uniform(0.2, 2.0)
    dictionary = dictionary_service.prox_unit_columns(DictionarySet(atoms=raw, n_classes=n_classes))
    svm = LinearSvmModel(
        weights=rng.standard_normal((n_classes, n_classes * atoms_per_class)),
        biases=rng.standard_normal(n_classes),
        c_svm=float(rng.uniform(0.001, 100)),
    )
    hyperparams = HyperParams(
        lam=float(rng.uniform(0, 1)), gamma1=float(rng.uniform(0, 1)), gamma2=float(rng.uniform(0, 1)),
        atoms_per_class=atoms_per_class, iterations=int(rng.integers(1, 300)),
    )
    return ModelBundle(dictionary=dictionary, svm=svm, hyperparams=hyperparams, pipeline=pipeline)


def subspace_features(
    seed: int = 0, n_classes: int = 3, per_class: int = 15, dim: int = 12, noise: float = 0.02
) -> FeatureSet:
    """Class c lives on its own block of dim // n_classes coordinates, with positive entries."""
    rng = np.random.default_rng(seed)
    width = dim // n_classes
    rows, labels = [], []
    for c in range(n_classes):
        for _ in range(per_class):
            x = np.abs(rng.normal(0.0, noise, dim))
            x[c * width:(c + 1) * width] += rng.uniform(0.5, 1.0, width)
            rows.append(x / np.linalg.norm(x))
            labels.append(c + 1)
    pipeline = FeaturePipelineConfig(kind=FeatureKind.POOLED_SPECTROGRAM, dim=dim)
    return FeatureSet(features=np.array(rows), labels=np.array(labels), pipeline=pipeline, n_classes=n_classes)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_features():
    return subspace_features()


@pytest.fixture
def bundle():
    return make_bundle()
