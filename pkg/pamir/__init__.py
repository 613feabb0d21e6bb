"""Inverse regression for compositional count data."""

__version__ = "0.1.0"
