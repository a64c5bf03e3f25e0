"""Cloud-edge collaborative time-series query engine and deterministic simulator."""

__version__ = "0.1.0"
