"""
Model bundle API routes.
Exposes the loaded bundle and classifies feature vectors or uploaded WAV clips.
"""

import io
import logging

import numpy as np
from fastapi import APIRouter, Depends, HTTPException, status, UploadFile, File

from app.config import settings
from app.models.api import BundleInfo, ClassifyRequest, ClassifyResponse, SimilarityResponse
from app.services.classifier_service import ClassifierService, classifier_service
from app.services.feature_service import feature_service

logger = logging.getLogger(__name__)

router = APIRouter(tags=["classification"])


def get_classifier() -> ClassifierService:
    """Dependency returning the classifier, or 503 while no bundle is loaded."""
    if not classifier_service.is_ready:
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            detail="No model bundle loaded",
        )
    return classifier_service


@router.get("/bundle", response_model=BundleInfo)
async def get_bundle(classifier: ClassifierService = Depends(get_classifier)):
    """Shapes, hyperparameters and feature pipeline of the loaded bundle."""
    return classifier.describe()


@router.get("/bundle/similarity", response_model=SimilarityResponse)
async def get_similarity(classifier: ClassifierService = Depends(get_classifier)):
    """Class-to-class dictionary similarity ||D_c^T D_c'||_F."""
    S, summary = classifier.similarity()
    return SimilarityResponse(matrix=S.tolist(), summary=summary)


@router.post("/classify", response_model=ClassifyResponse)
async def classify_features(
    request: ClassifyRequest,
    classifier: ClassifierService = Depends(get_classifier),
):
    """
    Classify feature vectors.

    Args:
        request: Vectors computed with the bundle's feature pipeline
        classifier: Loaded classifier

    Returns:
        One prediction per vector
    """
    predictions = classifier.classify_features(np.array(request.features, dtype=np.float64))
    logger.info(f"Classified {len(predictions)} feature vectors")
    return ClassifyResponse(predictions=predictions)


@router.post("/classify/audio", response_model=ClassifyResponse)
async def classify_audio(
    file: UploadFile = File(...),
    classifier: ClassifierService = Depends(get_classifier),
):
    """
    Classify an uploaded mono WAV clip.

    Raises:
        HTTPException: 413 if the upload exceeds MAX_UPLOAD_SIZE
    """
    content = await file.read()
    if len(content) > settings.MAX_UPLOAD_SIZE:
        raise HTTPException(
            status_code=status.HTTP_413_REQUEST_ENTITY_TOO_LARGE,
            detail=f"File size exceeds maximum allowed size of {settings.MAX_UPLOAD_SIZE / (1024 * 1024):.1f}MB",
        )

    clip = feature_service.load_wav(io.BytesIO(content))
    prediction = classifier.classify_clip(clip)
    logger.info(f"Classified upload {file.filename} as class {prediction.label}")
    return ClassifyResponse(predictions=[prediction])
