"""Variable-metric backward-forward and forward-backward flows."""

__version__ = "0.1.0"
