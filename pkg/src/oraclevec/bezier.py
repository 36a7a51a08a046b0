"""Cubic Bezier evaluation, flattening and least-squares fitting."""

from __future__ import annotations

import numpy as np

_MAX_REPARAM = 20


def evaluate(seg: np.ndarray, t: np.ndarray | float) -> np.ndarray:
    """Points on cubic ``seg`` (4x2) at parameters ``t``."""
    t = np.asarray(t, dtype=np.float64)[..., None]
    mt = 1.0 - t
    return (mt ** 3 * seg[0] + 3 * mt ** 2 * t * seg[1]
            + 3 * mt * t ** 2 * seg[2] + t ** 3 * seg[3])


def _d1(seg: np.ndarray, t: np.ndarray) -> np.ndarray:
    t = t[..., None]
    mt = 1.0 - t
    return 3 * (mt ** 2 * (seg[1] - seg[0]) + 2 * mt * t * (seg[2] - seg[1]) + t ** 2 * (seg[3] - seg[2]))


def _d2(seg: np.ndarray, t: np.ndarray) -> np.ndarray:
    t = t[..., None]
    return 6 * ((1.0 - t) * (seg[2] - 2 * seg[1] + seg[0]) + t * (seg[3] - 2 * seg[2] + seg[1]))


def line_segment(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Degree-elevated straight segment from ``a`` to ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.array([a, a + (b - a) / 3.0, a + 2.0 * (b - a) / 3.0, b])


def flatten(segs: np.ndarray, tolerance: float) -> np.ndarray:
    """Polyline through segments ``(S, 4, 2)`` within ``tolerance`` of the curves.

    Uses the standard second-difference bound to pick a uniform subdivision
    count per segment. Returns ``(M, 2)`` points including every anchor;
    consecutive segments share their joint point once.
    """
    segs = np.asarray(segs, dtype=np.float64)
    if len(segs) == 0:
        return np.zeros((0, 2))
    dd = np.maximum(np.linalg.norm(segs[:, 0] - 2 * segs[:, 1] + segs[:, 2], axis=1),
                    np.linalg.norm(segs[:, 1] - 2 * segs[:, 2] + segs[:, 3], axis=1))
    n = np.maximum(1, np.ceil(np.sqrt(0.75 * dd / tolerance))).astype(np.int64)
    total = int(n.sum())
    seg_idx = np.repeat(np.arange(len(segs)), n)
    start = np.repeat(np.cumsum(n) - n, n)
    t = (np.arange(total) - start) / n[seg_idx]
    t = t[:, None]
    mt = 1.0 - t
    s = segs[seg_idx]
    pts = (mt ** 3 * s[:, 0] + 3 * mt ** 2 * t * s[:, 1]
           + 3 * mt * t ** 2 * s[:, 2] + t ** 3 * s[:, 3])
    return np.vstack([pts, segs[-1, 3][None]])


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.hypot(v[0], v[1]))
    return v / n if n > 0 else np.zeros(2)


def _chord_params(pts: np.ndarray) -> np.ndarray:
    d = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    return d / d[-1] if d[-1] > 0 else np.linspace(0.0, 1.0, len(pts))


def _bernstein(u: np.ndarray) -> np.ndarray:
    mu = 1.0 - u
    return np.stack([mu ** 3, 3 * mu ** 2 * u, 3 * mu * u ** 2, u ** 3], axis=1)


def _fit_tangent(pts: np.ndarray, u: np.ndarray, t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
    """Least-squares cubic with fixed endpoint tangent directions."""
    p0, p3 = pts[0], pts[-1]
    b = _bernstein(u)
    a1 = b[:, 1:2] * t1
    a2 = b[:, 2:3] * t2
    c00 = float(np.sum(a1 * a1))
    c01 = float(np.sum(a1 * a2))
    c11 = float(np.sum(a2 * a2))
    rest = pts - (b[:, 0:1] + b[:, 1:2]) * p0 - (b[:, 2:3] + b[:, 3:4]) * p3
    x0 = float(np.sum(a1 * rest))
    x1 = float(np.sum(a2 * rest))
    det = c00 * c11 - c01 * c01
    chord = float(np.linalg.norm(p3 - p0))
    alpha1 = alpha2 = 0.0
    if abs(det) > 1e-12:
        alpha1 = (x0 * c11 - c01 * x1) / det
        alpha2 = (c00 * x1 - c01 * x0) / det
    eps = 1e-6 * chord
    if alpha1 < eps or alpha2 < eps:
        alpha1 = alpha2 = chord / 3.0
    return np.array([p0, p0 + alpha1 * t1, p3 + alpha2 * t2, p3])


def _fit_free(pts: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Least-squares cubic with only the endpoints pinned."""
    p0, p3 = pts[0], pts[-1]
    b = _bernstein(u)
    rest = pts - b[:, 0:1] * p0 - b[:, 3:4] * p3
    ctrl, *_ = np.linalg.lstsq(b[:, 1:3], rest, rcond=None)
    return np.array([p0, ctrl[0], ctrl[1], p3])


def _max_error(pts: np.ndarray, seg: np.ndarray, u: np.ndarray) -> tuple[float, int]:
    d = np.linalg.norm(evaluate(seg, u) - pts, axis=1)
    i = int(np.argmax(d))
    return float(d[i]), i


def _reparameterize(pts: np.ndarray, seg: np.ndarray, u: np.ndarray) -> np.ndarray:
    diff = evaluate(seg, u) - pts
    d1 = _d1(seg, u)
    d2 = _d2(seg, u)
    num = np.sum(diff * d1, axis=1)
    den = np.sum(d1 * d1, axis=1) + np.sum(diff * d2, axis=1)
    step = np.where(np.abs(den) > 1e-12, num / np.where(den == 0, 1.0, den), 0.0)
    out = np.clip(u - step, 0.0, 1.0)
    out[0], out[-1] = 0.0, 1.0
    return out


def distance_to_segments(points: np.ndarray, segs: np.ndarray, samples: int = 200) -> np.ndarray:
    """Approximate distance from each point to the union of segments by dense sampling."""
    t = np.linspace(0.0, 1.0, samples)
    dense = np.concatenate([evaluate(s, t) for s in segs]) if len(segs) else np.zeros((0, 2))
    out = np.empty(len(points))
    for i, p in enumerate(points):
        out[i] = np.min(np.linalg.norm(dense - p, axis=1))
    return out


def _fit_range(pts: np.ndarray, t1: np.ndarray, t2: np.ndarray, tol: float, out: list) -> None:
    if len(pts) == 2:
        out.append(line_segment(pts[0], pts[1]))
        return
    u = _chord_params(pts)
    seg = _fit_tangent(pts, u, t1, t2)
    err, split = _max_error(pts, seg, u)
    if err <= tol:
        out.append(seg)
        return
    # Newton reparameterization while it keeps shrinking the error
    for _ in range(_MAX_REPARAM):
        u2 = _reparameterize(pts, seg, u)
        seg2 = _fit_tangent(pts, u2, t1, t2)
        err2, split2 = _max_error(pts, seg2, u2)
        if err2 >= err:
            break
        u, seg, err, split = u2, seg2, err2, split2
        if err <= tol:
            out.append(seg)
            return
    if len(pts) >= 4:
        uf = _chord_params(pts)
        free = _fit_free(pts, uf)
        for _ in range(_MAX_REPARAM):
            ferr, _i = _max_error(pts, free, uf)
            if ferr <= tol:
                out.append(free)
                return
            uf = _reparameterize(pts, free, uf)
            free = _fit_free(pts, uf)
    split = min(max(split, 1), len(pts) - 2)
    centre = _unit(pts[split - 1] - pts[split + 1])
    if not centre.any():
        centre = _unit(pts[split - 1] - pts[split])
    _fit_range(pts[:split + 1], t1, centre, tol, out)
    _fit_range(pts[split:], -centre, t2, tol, out)


def fit_cubic_spline(points: np.ndarray, tolerance: float) -> np.ndarray:
    """Fit a G1-leaning piecewise cubic through ordered ``points``.

    Chord-length parameterized least squares with Newton reparameterization,
    recursively split at the worst point until every input point lies within
    ``tolerance`` of the curve. Endpoints are interpolated exactly. Returns
    ``(S, 4, 2)`` segments.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("cannot fit an empty point list")
    keep = np.concatenate([[True], np.any(np.diff(pts, axis=0) != 0, axis=1)])
    pts = pts[keep]
    if len(pts) < 2:
        return np.array([np.repeat(pts[:1], 4, axis=0)])
    t1 = _unit(pts[1] - pts[0])
    t2 = _unit(pts[-2] - pts[-1])
    out: list[np.ndarray] = []
    _fit_range(pts, t1, t2, float(tolerance), out)
    return np.array(out)


def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area of a closed polyline."""
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def arc_length_samples(polylines: list[np.ndarray], n: int) -> np.ndarray:
    """``n`` points uniformly spaced by arc length along the concatenated polylines."""
    pieces = [p for p in polylines if len(p) >= 2]
    if not pieces:
        raise ValueError("no polyline with positive length")
    starts, ends = [], []
    for p in pieces:
        starts.append(p[:-1])
        ends.append(p[1:])
    a = np.concatenate(starts)
    b = np.concatenate(ends)
    seg_len = np.linalg.norm(b - a, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    if total <= 0:
        raise ValueError("outline has zero length")
    s = (np.arange(n) + 0.5) * total / n
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg_len) - 1)
    frac = (s - cum[idx]) / np.where(seg_len[idx] > 0, seg_len[idx], 1.0)
    return a[idx] + frac[:, None] * (b[idx] - a[idx])


def rotate_unit(v: np.ndarray) -> np.ndarray:
    """Rotate vectors by +90 degrees: (x, y) -> (-y, x)."""
    v = np.asarray(v, dtype=np.float64)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


__all__ = [
    "arc_length_samples", "distance_to_segments", "evaluate", "fit_cubic_spline", "flatten",
    "line_segment", "polygon_area", "rotate_unit",
]
