"""Tangency map, its fixed points and band statistics, and the impact flow it approximates."""

__version__ = "0.1.0"
