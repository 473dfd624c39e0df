"""Vulnerable record identification and membership inference for synthetic tabular data."""

__version__ = "0.1.0"
