"""Workbench: corpus manifests, the qoe-forge CLI, and the rating service."""

from .config import ToolConfig
from .manifest import CorpusManifest, ManifestEntry, derive_seed, load_manifest, save_manifest

__all__ = ["ToolConfig", "CorpusManifest", "ManifestEntry", "derive_seed", "load_manifest", "save_manifest"]
