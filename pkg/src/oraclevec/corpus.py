"""Bundled synthetic stroke glyphs and the two-component morph demo.

Glyphs are drawn as thick polylines (every pixel whose centre lies within the
stroke half-width of a polyline is ink) on a 256 x 256 canvas.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .layout import Component, LayoutAnnotation
from .raster import Bitmap, save_pbm

CANVAS = 256
STROKE_HALF_WIDTH = 7.0


def _arc(cx: float, cy: float, r: float, a0: float, a1: float, n: int = 48) -> list[tuple[float, float]]:
    t = np.linspace(a0, a1, n)
    return [(cx + r * np.cos(a), cy + r * np.sin(a)) for a in t]


# name -> polylines in canvas pixels (x right, y down)
STROKE_GLYPHS: dict[str, list[list[tuple[float, float]]]] = {
    "bar": [[(48, 128), (208, 128)]],
    "plus": [[(128, 40), (128, 216)], [(40, 128), (216, 128)]],
    "tee": [[(48, 56), (208, 56)], [(128, 56), (128, 216)]],
    "corner": [[(64, 40), (64, 200), (200, 200)]],
    "ring": [_arc(128, 128, 72, 0.0, 2 * np.pi, 96)],
    "zigzag": [[(40, 200), (90, 56), (140, 200), (190, 56), (220, 120)]],
    "fork": [[(128, 220), (128, 128)], [(128, 128), (60, 40)], [(128, 128), (196, 40)]],
    "mountain": [[(40, 200), (216, 200)], [(64, 200), (64, 110)], [(128, 200), (128, 48)],
                 [(192, 200), (192, 110)]],
    "river": [[(80 + 28 * np.sin(t), 32 + 192 * t / (2 * np.pi)) for t in np.linspace(0, 2 * np.pi, 40)],
              [(176 + 28 * np.sin(t), 32 + 192 * t / (2 * np.pi)) for t in np.linspace(0, 2 * np.pi, 40)]],
    "sun": [_arc(128, 128, 64, 0.0, 2 * np.pi, 96), [(96, 128), (160, 128)]],
}


def _segment_distance(px: np.ndarray, py: np.ndarray, a, b) -> np.ndarray:
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    t = np.zeros_like(px) if L2 == 0 else np.clip(((px - ax) * dx + (py - ay) * dy) / L2, 0.0, 1.0)
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


def stroke_bitmap(polylines, half_width: float = STROKE_HALF_WIDTH, canvas: int = CANVAS) -> Bitmap:
    """Ink where a pixel centre lies within ``half_width`` of any polyline."""
    py, px = np.mgrid[0:canvas, 0:canvas] + 0.5
    d = np.full((canvas, canvas), np.inf)
    for line in polylines:
        for a, b in zip(line[:-1], line[1:]):
            d = np.minimum(d, _segment_distance(px, py, a, b))
    return Bitmap((d <= half_width).astype(np.uint8))


def corpus() -> dict[str, Bitmap]:
    """The ten bundled stroke glyphs, keyed by name."""
    return {name: stroke_bitmap(lines) for name, lines in STROKE_GLYPHS.items()}


# --------------------------------------------------------------------------
# Morph demo: two vertical strokes; the layout pushes them apart.

DEMO_STROKES = {
    "left": [[(94, 56), (94, 200)]],
    "right": [[(157, 56), (157, 200)]],
}
DEMO_HALF_WIDTH = 6.0


def demo_bitmap() -> Bitmap:
    lines = [ln for group in DEMO_STROKES.values() for ln in group]
    return stroke_bitmap(lines, DEMO_HALF_WIDTH)


def demo_layout() -> LayoutAnnotation:
    """Boxes displaced outward so each stroke starts with under a quarter of its ink inside."""
    return LayoutAnnotation(
        id="demo-two-strokes",
        concept="two strokes pushed apart",
        components=(
            Component("left", (0.0625, 0.125, 0.375, 0.875)),
            Component("right", (0.625, 0.125, 0.9375, 0.875)),
        ),
        relations=(("left", "right", "left-of"),),
    )


def write_corpus(directory: str | Path) -> list[Path]:
    """Write every bundled glyph as PBM plus the demo glyph and layout; returns the paths."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, bmp in {**corpus(), "demo": demo_bitmap()}.items():
        path = out / f"{name}.pbm"
        save_pbm(bmp, path)
        written.append(path)
    path = out / "demo_layout.json"
    path.write_text(json.dumps(demo_layout().to_dict(), indent=2) + "\n", encoding="utf-8")
    written.append(path)
    return written


if __name__ == "__main__":
    import sys

    if len(sys.argv) != 2:
        sys.exit("usage: python -m oraclevec.corpus OUTPUT_DIR")
    for p in write_corpus(sys.argv[1]):
        print(p)
