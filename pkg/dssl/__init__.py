"""Top-level package for dssl."""
from importlib import metadata

try:
    __version__ = metadata.version("dssl")
except metadata.PackageNotFoundError:
    __version__ = "0.0.0+unknown"
