"""
Services package initialization.
"""

from .feature_service import feature_service
from .chord_service import chord_service
from .sparse_coding import sparse_coding_service
from .dictionary_service import dictionary_service
from .ksvd_service import ksvd_service
from .svm_service import svm_service
from .model_store import model_store
from .experiment_service import experiment_service
from .classifier_service import classifier_service

__all__ = [
    "feature_service",
    "chord_service",
    "sparse_coding_service",
    "dictionary_service",
    "ksvd_service",
    "svm_service",
    "model_store",
    "experiment_service",
    "classifier_service"
]
