"""Operational layer: configuration, on-disk index persistence, HTTP API, CLI."""

from .config import EngineConfig, load_config
from .engine import Engine
from .store import IndexManifest, build_index, load_index

__all__ = [
    "Engine",
    "EngineConfig",
    "IndexManifest",
    "build_index",
    "load_config",
    "load_index",
]
