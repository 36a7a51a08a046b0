"""Glyph vectorization: skeleton normals, offset contours, spline fit, loop assembly."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt

from .bezier import fit_cubic_spline, flatten, line_segment, polygon_area, rotate_unit
from .errors import ArgumentError, EmptyGlyphError
from .glyph import VectorGlyph, loop_from_segments, loop_segments, reverse_loop
from .raster import Bitmap
from .skeleton import SkeletonPath, SkeletonSet, resample_path, trace_paths, zhang_suen_thin
from .svgio import DECIMALS as SVG_DECIMALS

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OgvParams:
    """Vectorization parameters.

    ``stroke_width`` is the half-width offset ``w`` in pixels; ``None`` estimates
    it from the distance transform of the input.
    """

    stroke_width: float | None = None
    window: int = 5
    spline_tolerance: float = 0.5
    resample_spacing: float = 3.0

    def __post_init__(self) -> None:
        if self.stroke_width is not None and self.stroke_width <= 0:
            raise ArgumentError(f"stroke_width must be > 0, got {self.stroke_width}")
        if self.window < 1 or self.window % 2 == 0:
            raise ArgumentError(f"window must be an odd integer >= 1, got {self.window}")
        if self.spline_tolerance <= 0:
            raise ArgumentError(f"spline_tolerance must be > 0, got {self.spline_tolerance}")
        if self.resample_spacing <= 0:
            raise ArgumentError(f"resample_spacing must be > 0, got {self.resample_spacing}")


def direction_normals(path: SkeletonPath) -> np.ndarray:
    """Unit normals from forward differences rotated by +90 degrees.

    The last point of an open path reuses the last direction; closed paths wrap.
    Zero-length steps take the nearest valid direction.
    """
    pts = path.points
    if len(pts) < 2:
        raise ArgumentError("normals need a path with at least 2 points")
    if path.closed:
        ring = pts[:-1]
        v = np.roll(ring, -1, axis=0) - ring
    else:
        v = np.diff(pts, axis=0)
        v = np.vstack([v, v[-1:]])
    norm = np.hypot(v[:, 0], v[:, 1])
    bad = norm == 0
    if bad.all():
        raise ArgumentError("path has no non-zero step")
    if bad.any():
        log.warning("skipping %d duplicate consecutive skeleton points", int(bad.sum()))
        good = np.nonzero(~bad)[0]
        idx = np.arange(len(v))
        nearest = good[np.clip(np.searchsorted(good, idx), 0, len(good) - 1)]
        v = v[nearest]
        norm = norm[nearest]
    mu = rotate_unit(v / norm[:, None])
    if path.closed:
        mu = np.vstack([mu, mu[:1]])
    return mu


def smooth_normals(normals: np.ndarray, k: int, closed: bool = False) -> np.ndarray:
    """Sliding-window mean of normals, renormalized to unit length.

    Open paths shrink the window at the ends; closed paths (whose last normal
    repeats the first) wrap around.
    """
    if k < 1 or k % 2 == 0:
        raise ArgumentError(f"window must be an odd integer >= 1, got {k}")
    mu = np.asarray(normals, dtype=np.float64)
    if k == 1 or len(mu) < 2:
        return mu.copy()
    half = k // 2
    ring = mu[:-1] if closed else mu
    n = len(ring)
    if closed:
        offsets = np.arange(-half, half + 1)
        idx = (np.arange(n)[:, None] + offsets[None, :]) % n
        mean = ring[idx].mean(axis=1)
    else:
        csum = np.vstack([np.zeros((1, 2)), np.cumsum(ring, axis=0)])
        lo = np.clip(np.arange(n) - half, 0, n)
        hi = np.clip(np.arange(n) + half + 1, 0, n)
        mean = (csum[hi] - csum[lo]) / (hi - lo)[:, None]
    length = np.hypot(mean[:, 0], mean[:, 1])
    flat = length < 1e-12
    out = np.where(flat[:, None], ring, mean / np.where(flat, 1.0, length)[:, None])
    if closed:
        out = np.vstack([out, out[:1]])
    return out


def offset_contours(path: SkeletonPath, normals: np.ndarray, w: float) -> tuple[np.ndarray, np.ndarray]:
    """Left/right contour points ``C +/- w * mu``."""
    pts = path.points
    mu = np.asarray(normals, dtype=np.float64)
    if mu.shape != pts.shape:
        raise ArgumentError(f"normals shape {mu.shape} does not match path shape {pts.shape}")
    return pts + w * mu, pts - w * mu


def assemble_loop(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Closed loop: left forward, flat cap, right reversed, flat cap.

    ``left`` and ``right`` are ``(S, 4, 2)`` fits of the same skeleton path.
    For closed skeletons the caps become a keyhole bridge between the two
    rings, which nonzero filling turns into an annulus.
    """
    right_rev = np.asarray(right)[::-1, ::-1]
    l_end, r_rev_start = left[-1, 3], right_rev[0, 0]
    r_rev_end, l_start = right_rev[-1, 3], left[0, 0]
    segs = np.concatenate([
        left,
        line_segment(l_end, r_rev_start)[None],
        right_rev,
        line_segment(r_rev_end, l_start)[None],
    ])
    return loop_from_segments(segs)


def orient_positive(loop: np.ndarray) -> np.ndarray:
    """Reverse the loop if its flattened signed area is negative."""
    poly = flatten(loop_segments(loop), 0.25)
    return reverse_loop(loop) if polygon_area(poly) < 0 else loop


def _dot_loop(centre: np.ndarray, w: float) -> np.ndarray:
    x, y = centre
    corners = np.array([[x - w, y - w], [x + w, y - w], [x + w, y + w], [x - w, y + w]])
    segs = np.array([line_segment(corners[i], corners[(i + 1) % 4]) for i in range(4)])
    return loop_from_segments(segs)


def estimate_stroke_width(img: Bitmap, skeleton: Bitmap) -> float:
    """Half stroke width: mean distance-transform value on the skeleton, minus the half pixel.

    The transform measures centre-to-centre distance to the nearest background
    pixel, while ink extends to pixel edges half a pixel closer.
    """
    edt = distance_transform_edt(np.pad(img.pixels, 1))[1:-1, 1:-1]
    on = skeleton.pixels.astype(bool)
    if not on.any():
        return 0.5
    return max(0.5, float(edt[on].mean()) - 0.5)


def stroke_loop(path: SkeletonPath, w: float, params: OgvParams) -> np.ndarray:
    """Outline loop for one canvas-space skeleton path."""
    if len(path) < 2 or path.length() == 0:
        return _dot_loop(path.points[0], w)
    mu = smooth_normals(direction_normals(path), params.window, closed=path.closed)
    left_pts, right_pts = offset_contours(path, mu, w)
    left = fit_cubic_spline(left_pts, params.spline_tolerance)
    right = fit_cubic_spline(right_pts, params.spline_tolerance)
    return orient_positive(assemble_loop(left, right))


def _canvas_path(path: SkeletonPath, spacing: float) -> SkeletonPath:
    moved = SkeletonPath(path.points + 0.5, closed=path.closed)
    if len(moved) < 2:
        return moved
    return resample_path(moved, spacing)


def vectorize(img: Bitmap, params: OgvParams | None = None) -> VectorGlyph:
    """Raster glyph to closed cubic outlines plus canvas-space skeleton paths.

    One loop is produced per traced skeleton path. Pixel ``(col, row)`` maps to
    canvas point ``(col + 0.5, row + 0.5)``. Output coordinates are rounded to
    the SVG writer's precision so a written glyph re-reads exactly.
    """
    params = params or OgvParams()
    if img.count() == 0:
        raise EmptyGlyphError("input raster has no foreground pixels")
    thin = zhang_suen_thin(img)
    traced: SkeletonSet = trace_paths(thin)
    w = params.stroke_width if params.stroke_width is not None else estimate_stroke_width(img, thin)
    loops, skel = [], []
    for path in traced.paths:
        cpath = _canvas_path(path, params.resample_spacing)
        loops.append(np.round(stroke_loop(cpath, w, params), SVG_DECIMALS))
        skel.append(SkeletonPath(np.round(cpath.points, SVG_DECIMALS), closed=cpath.closed))
    return VectorGlyph(loops, skel, (img.width, img.height))
