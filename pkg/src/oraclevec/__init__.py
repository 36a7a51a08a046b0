"""Glyph vectorization and structure-constrained morphing toolkit."""

__version__ = "0.1.0"
