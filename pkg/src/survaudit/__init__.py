"""Audit synthetic tabular survival datasets against a real reference."""

__version__ = "0.1.0"
