"""Embedding and sentiment sidecar for the creditxai pipeline."""

from .bundles import HashBundle, SidecarConfig, TransformersBundle, build_bundle
from .app import create_app
from .export import ExportFailure, export_fixtures

__all__ = [
    "HashBundle",
    "SidecarConfig",
    "TransformersBundle",
    "build_bundle",
    "create_app",
    "ExportFailure",
    "export_fixtures",
]

__version__ = "0.1.0"
