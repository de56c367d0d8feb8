"""Entropy production of continuously monitored Gaussian systems."""

__version__ = "0.1.0"
