"""FastAPI service wrapping the codec: encode, decode, stats, quality metrics."""

from .app import create_app

__all__ = ["create_app"]
