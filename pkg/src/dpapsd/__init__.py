"""Differentially private all-pairs shortest-path distances."""

__version__ = "0.1.0"
