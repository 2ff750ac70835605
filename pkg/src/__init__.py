"""Regional labour migration: panel and spatial econometrics."""

__version__ = "0.1.0"
