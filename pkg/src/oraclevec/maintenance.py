"""Glyph maintenance: skeleton anchors, SKST loss and gradient, tone loss, glyph distance."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .bezier import arc_length_samples
from .delaunay import Triangulation, delaunay
from .errors import ArgumentError
from .glyph import VectorGlyph, loop_segments
from .raster import GrayImage, blur_array

log = logging.getLogger(__name__)

MIN_ALPHA = 1e-9
DISTANCE_SAMPLES = 512
TONE_SIGMA = 8.0


def triangulate_glyph(glyph: VectorGlyph) -> Triangulation:
    """Delaunay triangulation over the glyph's unique control-point positions."""
    pm = glyph.positions()
    uniq, inverse = np.unique(pm, axis=0, return_inverse=True)
    # np.unique sorts; re-order vertices by first appearance for stable indices.
    first = np.full(len(uniq), len(pm))
    np.minimum.at(first, inverse.ravel(), np.arange(len(pm)))
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    tri = delaunay(uniq[order])
    return Triangulation(tri.vertices, tri.triangles, source_index=rank[inverse.ravel()])


@dataclass(frozen=True, eq=False)
class SkeletonAnchors:
    """Reference skeleton-to-contour vectors, frozen from the initial glyph.

    Parallel arrays: ``skeleton[m]`` and ``contour[m]`` index the combined
    control-point list, ``triangle[m]`` is the first triangle joining them and
    ``alpha[m] = P[contour] - P[skeleton]``.
    """

    skeleton: np.ndarray
    contour: np.ndarray
    triangle: np.ndarray
    alpha: np.ndarray
    dropped: int = 0
    excluded: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.alpha)


def build_anchors(tri: Triangulation, glyph: VectorGlyph) -> SkeletonAnchors:
    """Link every skeleton point to each contour vertex sharing a triangle with it.

    One anchor per distinct (skeleton point, contour vertex) pair. When several
    contour control points coincide at a vertex the first one carries the
    anchor. Vectors shorter than 1e-9 are dropped and counted.
    """
    pm = glyph.positions()
    n_contour = glyph.n_contour
    src = tri.source_index if tri.source_index is not None else np.arange(len(pm))
    if len(src) != len(pm):
        raise ArgumentError("triangulation was not built over this glyph's control points")
    contour_at = np.full(len(tri.vertices), -1, dtype=np.int64)
    for i in range(n_contour - 1, -1, -1):
        contour_at[int(src[i])] = i
    incident = tri.incident()
    sk, ct, tk, al = [], [], [], []
    dropped = 0
    excluded = []
    for j in range(n_contour, len(pm)):
        u = int(src[j])
        seen: set[int] = set()
        linked = 0
        if contour_at[u] >= 0:
            # a contour point at the same position gives a zero-length vector
            seen.add(int(contour_at[u]))
            linked += 1
            dropped += 1
        for k in incident[u]:
            for v in tri.triangles[k]:
                v = int(v)
                if v == u:
                    continue
                i = int(contour_at[v])
                if i < 0 or i in seen:
                    continue
                seen.add(i)
                linked += 1
                a = pm[i] - pm[j]
                if np.hypot(a[0], a[1]) < MIN_ALPHA:
                    dropped += 1
                    continue
                sk.append(j)
                ct.append(i)
                tk.append(k)
                al.append(a)
        if linked == 0:
            excluded.append(j)
    if excluded:
        log.warning("%d skeleton point(s) have no incident contour vertex", len(excluded))
    return SkeletonAnchors(
        np.array(sk, dtype=np.int64), np.array(ct, dtype=np.int64), np.array(tk, dtype=np.int64),
        np.array(al, dtype=np.float64).reshape(-1, 2), dropped, tuple(excluded),
    )


def glyph_anchors(glyph: VectorGlyph) -> SkeletonAnchors:
    if glyph.n_skeleton == 0:
        return SkeletonAnchors(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64),
                               np.zeros((0, 2)))
    return build_anchors(triangulate_glyph(glyph), glyph)


def _skst_terms(anchors: SkeletonAnchors, deformed: np.ndarray):
    ahat = deformed[anchors.contour] - deformed[anchors.skeleton]
    na = np.linalg.norm(anchors.alpha, axis=1)
    nh = np.linalg.norm(ahat, axis=1)
    valid = nh > 0
    cos = np.zeros(len(ahat))
    cos[valid] = np.einsum("ij,ij->i", anchors.alpha[valid], ahat[valid]) / (na[valid] * nh[valid])
    return ahat, na, nh, valid, cos


def skst_loss(anchors: SkeletonAnchors, deformed: np.ndarray) -> float:
    """Mean of ReLU(-cos) between reference and deformed skeleton-to-contour vectors."""
    if len(anchors) == 0:
        return 0.0
    deformed = np.asarray(deformed, dtype=np.float64)
    _, _, _, valid, cos = _skst_terms(anchors, deformed)
    n = int(valid.sum())
    if n == 0:
        return 0.0
    return float(np.maximum(-cos[valid], 0.0).sum() / n)


def skst_gradient(anchors: SkeletonAnchors, deformed: np.ndarray) -> np.ndarray:
    """Analytic gradient of :func:`skst_loss` with respect to every deformed position."""
    deformed = np.asarray(deformed, dtype=np.float64)
    grad = np.zeros_like(deformed)
    if len(anchors) == 0:
        return grad
    ahat, na, nh, valid, cos = _skst_terms(anchors, deformed)
    n = int(valid.sum())
    active = valid & (cos < 0)
    if n == 0 or not active.any():
        return grad
    a = anchors.alpha[active]
    h = ahat[active]
    nha = nh[active][:, None]
    # d(-cos)/d(ahat) = -(alpha / (|alpha||ahat|) - cos * ahat / |ahat|^2)
    g = -(a / (na[active][:, None] * nha) - cos[active][:, None] * h / nha ** 2) / n
    np.add.at(grad, anchors.contour[active], g)
    np.add.at(grad, anchors.skeleton[active], -g)
    return grad


def tone_loss(original: GrayImage, current: GrayImage, sigma: float = TONE_SIGMA) -> float:
    """Mean squared difference of the Gaussian-blurred rasters."""
    if (original.width, original.height) != (current.width, current.height):
        raise ArgumentError(f"tone loss needs equal sizes, got {original.values.shape} and {current.values.shape}")
    return tone_loss_arrays(blur_array(original.values, sigma), current.values, sigma)


def tone_loss_arrays(blurred_original: np.ndarray, current: np.ndarray, sigma: float) -> float:
    d = blur_array(current, sigma) - blurred_original
    return float(np.mean(d * d))


# --------------------------------------------------------------------------
# Distance

_DIST_SUBDIV = 16


def outline_samples(glyph: VectorGlyph, n: int = DISTANCE_SAMPLES) -> np.ndarray:
    """``n`` arc-length-uniform outline samples, normalized into the unit square at the origin."""
    if glyph.is_empty():
        raise ArgumentError("glyph distance needs a non-empty glyph")
    t = np.linspace(0.0, 1.0, _DIST_SUBDIV + 1)
    polys = []
    for i in range(len(glyph.loops)):
        segs = loop_segments(glyph.loops[i])
        mt = 1.0 - t[None, :, None]
        tt = t[None, :, None]
        pts = (mt ** 3 * segs[:, None, 0] + 3 * mt ** 2 * tt * segs[:, None, 1]
               + 3 * mt * tt ** 2 * segs[:, None, 2] + tt ** 3 * segs[:, None, 3])
        polys.append(np.vstack([pts[:, :-1].reshape(-1, 2), segs[-1, 3][None]]))
    allpts = np.concatenate(polys)
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    span = float(np.max(hi - lo))
    scale = 1.0 / span if span > 0 else 1.0
    centre = 0.5 * (lo + hi)
    try:
        samples = arc_length_samples(polys, n)
    except ValueError:
        raise ArgumentError("glyph outline has zero length") from None
    return (samples - centre) * scale


def chamfer(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric mean Chamfer distance (average of both directed means)."""
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))
    return 0.5 * float(d.min(axis=1).mean() + d.min(axis=0).mean())


def glyph_distance(a: VectorGlyph, b: VectorGlyph, n: int = DISTANCE_SAMPLES) -> float:
    return chamfer(outline_samples(a, n), outline_samples(b, n))
