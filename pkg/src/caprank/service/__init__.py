"""HTTP service exposing the pipeline stages and online scoring."""

from caprank.service.app import app, create_app

__all__ = ["app", "create_app"]
