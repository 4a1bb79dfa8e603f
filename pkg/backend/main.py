"""
Main FastAPI application entry point.
Loads the model bundle and serves the classification routes.
"""

import logging
import logging.config
from contextlib import asynccontextmanager
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from app.api import api_router
from app.config import settings, validate_config, get_logging_config
from app.models.api import HealthCheck
from app.services.classifier_service import classifier_service
from app.utils.errors import SDLError

# Configure logging
logging.config.dictConfig(get_logging_config())
logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """
    Application lifespan manager.
    Loads the configured bundle on startup; the API still starts without one.
    """
    logger.info(f"Starting {settings.PROJECT_NAME}...")

    if not validate_config():
        logger.error("Configuration validation failed")
        raise RuntimeError("Invalid configuration")

    if classifier_service.is_ready:
        logger.info("Using the model bundle already attached to the classifier")
    elif Path(settings.BUNDLE_PATH).is_file():
        try:
            classifier_service.load(settings.BUNDLE_PATH)
        except SDLError as e:
            logger.error(f"Failed to load bundle {settings.BUNDLE_PATH}: {e.to_dict()}")
    else:
        logger.warning(f"No model bundle at {settings.BUNDLE_PATH}; classification routes return 503")

    logger.info("Application startup completed")
    yield
    logger.info("Application shutdown completed")


# Create FastAPI application
app = FastAPI(
    title=settings.PROJECT_NAME,
    version=settings.VERSION,
    description="Chord classification with supervised incoherent dictionaries",
    docs_url="/docs" if settings.DEBUG else None,
    redoc_url="/redoc" if settings.DEBUG else None,
    lifespan=lifespan,
)

# Include API routes
app.include_router(api_router, prefix=settings.API_V1_STR)


@app.get("/")
async def root():
    """Root endpoint with basic application information."""
    return {
        "message": f"{settings.PROJECT_NAME} API",
        "version": settings.VERSION,
        "environment": settings.ENVIRONMENT,
        "docs_url": "/docs" if settings.DEBUG else "Documentation not available in production",
    }


@app.get("/health", response_model=HealthCheck)
async def health_check():
    """
    Health check endpoint.
    Reports whether a model bundle is loaded.
    """
    ready = classifier_service.is_ready
    return HealthCheck(
        status="healthy" if ready else "degraded",
        timestamp=datetime.now(timezone.utc),
        version=settings.VERSION,
        environment=settings.ENVIRONMENT,
        services={"model_bundle": "loaded" if ready else "missing"},
    )


@app.exception_handler(SDLError)
async def sdl_exception_handler(request, exc: SDLError):
    """Toolkit errors are client-visible 422 responses with their structured context."""
    logger.warning(f"Request failed: {exc.to_dict()}")
    return JSONResponse(
        status_code=422,
        content={**exc.to_dict(), "status_code": 422},
    )


@app.exception_handler(HTTPException)
async def http_exception_handler(request, exc):
    """Global HTTP exception handler."""
    logger.warning(f"HTTP exception: {exc.status_code} - {exc.detail}")
    return JSONResponse(
        status_code=exc.status_code,
        content={
            "error": exc.detail,
            "status_code": exc.status_code,
        },
    )


@app.exception_handler(Exception)
async def general_exception_handler(request, exc):
    """Global exception handler for unhandled exceptions."""
    logger.error(f"Unhandled exception: {exc}", exc_info=True)
    return JSONResponse(
        status_code=500,
        content={
            "error": "Internal server error",
            "status_code": 500,
        },
    )


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(
        "main:app",
        host="0.0.0.0",
        port=8000,
        reload=settings.DEBUG,
        log_level=settings.LOG_LEVEL.lower(),
    )
