"""Dimension certification from prepare-and-measure communication matrices."""

__version__ = "0.1.0"
