"""
Root entry point.
Puts backend/ on the import path and re-exports the FastAPI app.
"""

import importlib.util
import sys
from pathlib import Path

BACKEND_DIR = Path(__file__).resolve().parent / "backend"
sys.path.insert(0, str(BACKEND_DIR))

# Loaded under another name: this module is itself called "main".
_spec = importlib.util.spec_from_file_location("backend_main", BACKEND_DIR / "main.py")
_backend_main = importlib.util.module_from_spec(_spec)
_spec.loader.exec_module(_backend_main)

app = _backend_main.app

__all__ = ["app"]
