"""Encoding-based alignment of a small recurrent CNN to EEG, with an RSA evaluation suite."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("realign")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = ["__version__"]
