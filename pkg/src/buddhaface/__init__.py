"""Iconometric face proportions of Buddha statues and embedding-based
classification of statue metadata."""

from __future__ import annotations

from importlib import metadata, resources
from pathlib import Path

try:
    __version__ = metadata.version("artifact")
except metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"


def bundled_path(name: str) -> Path:
    """Filesystem path of a bundled data file, e.g. ``synthetic/catalog.csv``."""
    return Path(str(resources.files(__name__).joinpath("data", *name.split("/"))))
