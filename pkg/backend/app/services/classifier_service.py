"""
Classifier service.
Holds the loaded model bundle and classifies feature vectors or audio clips with it.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np

from app.models.api import BundleInfo, Prediction
from app.models.audio import AudioClip
from app.models.bundle import ModelBundle
from app.models.dictionary import SimilaritySummary
from app.services.chord_service import chord_service
from app.services.dictionary_service import dictionary_service
from app.services.experiment_service import encode
from app.services.feature_service import feature_service
from app.services.model_store import model_store
from app.services.svm_service import svm_service
from app.utils.errors import StoreError

logger = logging.getLogger(__name__)


class ClassifierService:
    """Service class for inference with a trained bundle."""

    def __init__(self):
        self.bundle: Optional[ModelBundle] = None
        self.path: Optional[str] = None

    @property
    def is_ready(self) -> bool:
        return self.bundle is not None

    def load(self, path: str) -> ModelBundle:
        self.bundle = model_store.load_bundle(path)
        self.path = str(path)
        logger.info(
            f"Loaded bundle {path}: {self.bundle.dictionary.n_classes} classes, "
            f"{self.bundle.dictionary.n_atoms} atoms, M={self.bundle.dictionary.dim}"
        )
        return self.bundle

    def use(self, bundle: ModelBundle) -> None:
        self.bundle = bundle
        self.path = None

    def _require(self) -> ModelBundle:
        if self.bundle is None:
            raise StoreError("no model bundle loaded")
        return self.bundle

    def class_name(self, label: int) -> Optional[str]:
        """Chord type name when the bundle was trained on the chord taxonomy."""
        if self._require().dictionary.n_classes == chord_service.n_classes:
            return chord_service.chord_type(label).name
        return None

    def classify_features(self, F: np.ndarray) -> List[Prediction]:
        bundle = self._require()
        F = np.atleast_2d(np.asarray(F, dtype=np.float64))
        scores = svm_service.decision_function(bundle.svm, encode(F, bundle.dictionary, bundle.hyperparams))
        labels = np.argmax(scores, axis=1) + 1
        return [
            Prediction(label=int(label), name=self.class_name(int(label)), scores=row.tolist())
            for label, row in zip(labels, scores)
        ]

    def classify_clip(self, clip: AudioClip) -> Prediction:
        """Featurize with the bundle's own pipeline, then classify."""
        bundle = self._require()
        vector = feature_service.featurize_clip(clip, bundle.pipeline)
        return self.classify_features(vector.values)[0]

    def similarity(self) -> Tuple[np.ndarray, SimilaritySummary]:
        S = dictionary_service.dictionary_similarity(self._require().dictionary)
        return S, dictionary_service.similarity_summary(S)

    def describe(self) -> BundleInfo:
        bundle = self._require()
        return BundleInfo(
            path=self.path,
            version=bundle.version,
            n_classes=bundle.dictionary.n_classes,
            atoms_per_class=bundle.dictionary.block_size,
            dim=bundle.dictionary.dim,
            c_svm=bundle.svm.c_svm,
            hyperparams=bundle.hyperparams.dict(by_alias=True),
            pipeline=bundle.pipeline,
        )


# Global classifier service instance
classifier_service = ClassifierService()
