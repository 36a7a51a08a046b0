"""Exception hierarchy.

Argument errors map to CLI exit code 2, data errors to exit code 3.
"""

from __future__ import annotations


class OracleVecError(Exception):
    """Base class for all package errors."""


class ArgumentError(OracleVecError, ValueError):
    """A caller passed an out-of-range or inconsistent argument."""


class ConfigError(ArgumentError):
    """Invalid or unknown configuration key/value."""


class DataError(OracleVecError):
    """Input data is malformed or cannot be processed."""


class ParseError(DataError):
    """A file could not be parsed (PGM/PBM, SVG, JSON)."""


class DegeneracyError(DataError):
    """Geometric input is degenerate (too few points, collinear, duplicates, empty box)."""


class EmptyGlyphError(DataError):
    """A glyph or raster has no foreground to work on."""


class RenderError(DataError):
    """A glyph cannot be rendered (e.g. an open loop)."""


class GuidanceError(DataError):
    """Guidance input (target image, gradient sidecar) is missing or invalid."""


class NumericError(DataError):
    """A computation produced non-finite values."""


class DivergenceError(DataError):
    """The optimizer moved control points far outside the canvas."""
