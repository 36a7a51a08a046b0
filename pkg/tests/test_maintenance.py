import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import convolve2d

from oraclevec.bezier import line_segment
from oraclevec.contour import vectorize
from oraclevec.corpus import corpus
from oraclevec.errors import ArgumentError
from oraclevec.glyph import VectorGlyph, loop_from_segments
from oraclevec.maintenance import (
    SkeletonAnchors,
    build_anchors,
    glyph_anchors,
    glyph_distance,
    outline_samples,
    skst_gradient,
    skst_loss,
    tone_loss,
    triangulate_glyph,
)
from oraclevec.raster import GrayImage
from oraclevec.skeleton import SkeletonPath

CORNERS = np.array([[0, 0], [10, 0], [10, 10], [0, 10]], dtype=float)


def sharp_square(skeleton_points) -> VectorGlyph:
    """Square whose handles sit on its corners, so its distinct positions are the 4 corners."""
    c = CORNERS
    loop = np.array([c[0], c[0], c[1], c[1], c[1], c[2], c[2], c[2], c[3], c[3], c[3], c[0]])
    return VectorGlyph([loop], [SkeletonPath(skeleton_points)], (16, 16))


def polygon_glyph(*polys, canvas=(64, 64)) -> VectorGlyph:
    loops = []
    for poly in polys:
        poly = np.asarray(poly, dtype=float)
        segs = np.array([line_segment(poly[i], poly[(i + 1) % len(poly)]) for i in range(len(poly))])
        loops.append(loop_from_segments(segs))
    return VectorGlyph(loops, [], canvas)


@pytest.fixture(scope="module")
def river():
    g = vectorize(corpus()["river"])
    return g, glyph_anchors(g)


# -- anchors ---------------------------------------------------------------

def test_square_with_centre_gives_four_corner_anchors():
    g = sharp_square([(5, 5)])
    a = glyph_anchors(g)
    assert len(a) == 4
    got = {tuple(v) for v in (a.alpha + [5, 5]).tolist()}
    assert got == {tuple(c) for c in CORNERS.tolist()}
    assert set(a.skeleton.tolist()) == {12}


def test_no_skeleton_gives_empty_anchors():
    a = glyph_anchors(polygon_glyph(CORNERS))
    assert len(a) == 0


def brute_incidences(tri, glyph) -> int:
    """Distinct (skeleton point, contour vertex) pairs that share a triangle."""
    src = tri.source_index
    nc = glyph.n_contour
    contour_vertices = {int(src[i]) for i in range(nc)}
    total = 0
    for j in range(nc, len(src)):
        u = int(src[j])
        linked = {u} & contour_vertices
        for t in tri.triangles:
            if u in t:
                linked |= {int(v) for v in t if v != u and int(v) in contour_vertices}
        total += len(linked)
    return total


def test_anchor_count_matches_incidence_scan(river):
    g, a = river
    tri = triangulate_glyph(g)
    assert len(a) + a.dropped == brute_incidences(tri, g)
    assert np.all(np.linalg.norm(a.alpha, axis=1) > 0)
    pm = g.positions()
    np.testing.assert_allclose(a.alpha, pm[a.contour] - pm[a.skeleton], atol=1e-12)
    for s, c, k in zip(a.skeleton, a.contour, a.triangle):
        verts = set(tri.triangles[k].tolist())
        assert {int(tri.source_index[s]), int(tri.source_index[c])} <= verts


def test_skeleton_point_without_contour_neighbour_is_excluded(caplog):
    t = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    ring = np.stack([5 + 1.5 * np.cos(t), 5 + 1.5 * np.sin(t)], 1)
    g = VectorGlyph(sharp_square([(5, 5)]).loops,
                    [SkeletonPath([(5, 5)]), SkeletonPath(ring)], (16, 16))
    with caplog.at_level(logging.WARNING):
        a = glyph_anchors(g)
    assert a.excluded == (12,)
    assert "no incident contour vertex" in caplog.text
    assert 12 not in a.skeleton.tolist()


def test_coincident_skeleton_and_contour_point_is_dropped():
    g = sharp_square([(5, 5), (0, 0)])
    a = glyph_anchors(g)
    assert a.dropped == 1
    assert np.all(np.linalg.norm(a.alpha, axis=1) >= 1e-9)


def test_build_anchors_rejects_foreign_triangulation():
    g = sharp_square([(5, 5)])
    tri = triangulate_glyph(sharp_square([(5, 5)]))
    other = VectorGlyph(g.loops, [SkeletonPath([(5, 5), (4, 4)])], g.canvas)
    with pytest.raises(ArgumentError):
        build_anchors(tri, other)


# -- SKST loss -------------------------------------------------------------

def test_identity_is_zero(river):
    g, a = river
    assert skst_loss(a, g.positions()) == 0.0


def test_translation_is_zero(river):
    g, a = river
    assert skst_loss(a, g.positions() + [10.0, 10.0]) == 0.0


def test_positive_scaling_is_zero(river):
    g, a = river
    assert skst_loss(a, 2.5 * g.positions() - 7.0) == 0.0


def test_one_flipped_anchor_of_four():
    g = sharp_square([(5, 5)])
    a = glyph_anchors(g)
    pos = g.positions().copy()
    i = int(a.contour[0])
    pos[i] = pos[12] - a.alpha[0]
    assert skst_loss(a, pos) == pytest.approx(0.25, abs=1e-15)


def test_zero_length_deformed_vector_is_skipped():
    g = sharp_square([(5, 5)])
    a = glyph_anchors(g)
    pos = g.positions().copy()
    pos[int(a.contour[0])] = pos[12]
    pos[int(a.contour[1])] = pos[12] - a.alpha[1]
    assert skst_loss(a, pos) == pytest.approx(1.0 / 3.0, abs=1e-15)


def test_empty_anchor_loss_and_gradient():
    a = glyph_anchors(polygon_glyph(CORNERS))
    pos = polygon_glyph(CORNERS).positions()
    assert skst_loss(a, pos) == 0.0
    assert not skst_gradient(a, pos).any()


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10 ** 6), scale=st.floats(0.0, 30.0))
def test_loss_in_unit_interval(river, seed, scale):
    g, a = river
    r = np.random.default_rng(seed)
    pos = g.positions() + r.normal(size=g.positions().shape) * scale
    v = skst_loss(a, pos)
    assert 0.0 <= v <= 1.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6), s=st.floats(0.01, 100.0),
       tx=st.floats(-300, 300), ty=st.floats(-300, 300))
def test_similarity_invariance(river, seed, s, tx, ty):
    g, a = river
    assert skst_loss(a, s * g.positions() + [tx, ty]) == 0.0


# -- SKST gradient ---------------------------------------------------------

def test_gradient_zero_at_identity(river):
    g, a = river
    assert not skst_gradient(a, g.positions()).any()


def fd_gradient(a, pos, h=1e-4):
    out = np.zeros_like(pos)
    for idx in np.ndindex(*pos.shape):
        p = pos.copy()
        p[idx] += h
        up = skst_loss(a, p)
        p[idx] -= 2 * h
        out[idx] = (up - skst_loss(a, p)) / (2 * h)
    return out


def test_gradient_matches_central_differences(river):
    g, a = river
    r = np.random.default_rng(7)
    base = g.positions()
    for _ in range(20):
        pos = base + r.normal(size=base.shape) * 2.5
        # stay clear of the ReLU kink so central differences do not straddle it
        ahat = pos[a.contour] - pos[a.skeleton]
        cos = np.einsum("ij,ij->i", a.alpha, ahat) / (
            np.linalg.norm(a.alpha, axis=1) * np.linalg.norm(ahat, axis=1))
        if np.min(np.abs(cos)) > 1e-2 and np.any(cos < 0):
            break
    else:
        pytest.fail("no deformation away from the kink")
    ana = skst_gradient(a, pos)
    num = fd_gradient(a, pos)
    assert np.abs(ana).max() > 0
    rel = np.linalg.norm(ana - num) / np.linalg.norm(num)
    assert rel < 1e-4
    np.testing.assert_allclose(ana, num, rtol=1e-4, atol=1e-4 * np.abs(num).max())


def test_gradient_is_local(river):
    g, a = river
    pos = g.positions().copy()
    k = 3
    pos[a.contour[k]] = pos[a.skeleton[k]] - a.alpha[k]
    grad = skst_gradient(a, pos)
    ahat = pos[a.contour] - pos[a.skeleton]
    active = np.einsum("ij,ij->i", a.alpha, ahat) < 0
    touched = set(a.contour[active].tolist()) | set(a.skeleton[active].tolist())
    nonzero = set(np.nonzero(np.any(grad != 0, axis=1))[0].tolist())
    assert nonzero and nonzero <= touched


# -- tone ------------------------------------------------------------------

def test_tone_identical_is_zero(rng):
    img = GrayImage(rng.random((32, 32)))
    assert tone_loss(img, img, 8.0) == 0.0


def test_tone_zeros_vs_ones():
    assert tone_loss(GrayImage(np.zeros((32, 32))), GrayImage(np.ones((32, 32))), 8.0) == pytest.approx(1.0, abs=1e-12)


def direct_blur(a, sigma):
    r = int(np.ceil(3 * sigma))
    x = np.arange(-r, r + 1)
    g = np.exp(-x ** 2 / (2 * sigma ** 2))
    k = np.outer(g, g)
    num = convolve2d(a, k, mode="same")
    den = convolve2d(np.ones_like(a), k, mode="same")
    return num / den


def test_tone_shifted_square_matches_direct_oracle():
    a = np.zeros((64, 64))
    a[20:40, 20:40] = 1
    b = np.zeros((64, 64))
    b[20:40, 24:44] = 1
    expect = float(np.mean((direct_blur(a, 8.0) - direct_blur(b, 8.0)) ** 2))
    assert tone_loss(GrayImage(a), GrayImage(b), 8.0) == pytest.approx(expect, abs=1e-10)


def test_tone_size_mismatch():
    with pytest.raises(ArgumentError):
        tone_loss(GrayImage(np.zeros((8, 8))), GrayImage(np.zeros((8, 9))), 1.0)


# -- distance --------------------------------------------------------------

TRI_A = [(10, 10), (50, 12), (30, 45)]
TRI_B = [(5, 40), (60, 35), (20, 5)]


def polygon_samples(poly, n):
    """Arc-length-uniform samples at (i + 1/2) L / n around a polygon, bbox-normalized."""
    poly = np.asarray(poly, dtype=float)
    edges = [(poly[i], poly[(i + 1) % len(poly)]) for i in range(len(poly))]
    lengths = [np.linalg.norm(b - a) for a, b in edges]
    total = sum(lengths)
    out = []
    for i in range(n):
        s = (i + 0.5) * total / n
        for (a, b), ln in zip(edges, lengths):
            if s <= ln:
                out.append(a + (b - a) * s / ln)
                break
            s -= ln
    pts = np.array(out)
    lo, hi = poly.min(0), poly.max(0)
    return (pts - 0.5 * (lo + hi)) / np.max(hi - lo)


def brute_chamfer(p, q):
    def directed(x, y):
        return sum(min(np.hypot(*(a - b)) for b in y) for a in x) / len(x)
    return 0.5 * (directed(p, q) + directed(q, p))


def test_distance_identical_is_zero():
    g = polygon_glyph(TRI_A)
    assert glyph_distance(g, g) == 0.0


def test_distance_similarity_copy_is_zero():
    a = polygon_glyph(TRI_A)
    b = polygon_glyph(np.asarray(TRI_A) * 1.75 + [3.0, -4.0])
    assert glyph_distance(a, b) < 1e-9


def test_outline_samples_match_polygon_oracle():
    np.testing.assert_allclose(outline_samples(polygon_glyph(TRI_A), 512), polygon_samples(TRI_A, 512),
                               atol=1e-9)


def test_two_triangles_match_brute_force_chamfer():
    pa, pb = polygon_samples(TRI_A, 512), polygon_samples(TRI_B, 512)
    expect = brute_chamfer(pa, pb)
    got = glyph_distance(polygon_glyph(TRI_A), polygon_glyph(TRI_B))
    assert got == pytest.approx(expect, abs=1e-9)
    assert got > 0.01


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_distance_symmetric(seed):
    r = np.random.default_rng(seed)
    a = polygon_glyph(r.uniform(0, 64, (4, 2)))
    b = polygon_glyph(r.uniform(0, 64, (5, 2)), r.uniform(0, 64, (3, 2)))
    assert glyph_distance(a, b) == pytest.approx(glyph_distance(b, a), abs=1e-15)
    assert glyph_distance(a, b) >= 0.0


def test_distance_empty_glyph():
    with pytest.raises(ArgumentError):
        glyph_distance(VectorGlyph([], [], (64, 64)), polygon_glyph(TRI_A))


def test_anchor_container_length():
    a = SkeletonAnchors(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, 2)))
    assert len(a) == 0
