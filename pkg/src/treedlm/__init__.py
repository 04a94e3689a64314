"""Treed distributed lag models for single exposures and exposure mixtures."""

__version__ = "0.1.0"
