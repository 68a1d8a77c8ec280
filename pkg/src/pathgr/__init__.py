"""Explainable generative retrieval over hierarchical category paths."""

__version__ = "0.1.0"
