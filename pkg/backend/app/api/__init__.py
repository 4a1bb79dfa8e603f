"""
API package initialization.
Imports all API routers for the application.
"""

from fastapi import APIRouter
from app.api import bundles

# Create main API router
api_router = APIRouter()

# Include all API routers
api_router.include_router(bundles.router)

__all__ = ["api_router"]
