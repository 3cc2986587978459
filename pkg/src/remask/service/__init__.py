"""HTTP service wrapping the decoding engine."""

from remask.service.app import app, create_app

__all__ = ["app", "create_app"]
