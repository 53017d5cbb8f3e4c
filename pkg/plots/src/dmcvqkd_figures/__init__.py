"""Batch rendering of key-rate figures from dmcvqkd sweep CSVs."""

__version__ = "0.1.0"
