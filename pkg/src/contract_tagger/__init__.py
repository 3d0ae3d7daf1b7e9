"""Sequence labeling for contract element extraction."""

__version__ = "0.1.0"
