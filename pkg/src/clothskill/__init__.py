"""Decompose, learn and compose language-conditioned cloth folding skills."""

__version__ = "0.1.0"
