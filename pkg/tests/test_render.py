import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oraclevec.bezier import line_segment
from oraclevec.contour import vectorize
from oraclevec.corpus import corpus
from oraclevec.errors import ArgumentError, RenderError
from oraclevec.glyph import VectorGlyph, loop_from_segments
from oraclevec.render import RenderParams, SampleGrid, loop_window, loop_winding, render, render_components

KAPPA = 4 * (np.sqrt(2) - 1) / 3


def polygon_loop(poly) -> np.ndarray:
    poly = np.asarray(poly, dtype=float)
    return loop_from_segments(np.array([line_segment(poly[i], poly[(i + 1) % len(poly)])
                                        for i in range(len(poly))]))


def circle_loop(cx, cy, r) -> np.ndarray:
    k = KAPPA * r
    e, n, w, s = (cx + r, cy), (cx, cy + r), (cx - r, cy), (cx, cy - r)
    return np.array([
        e, (cx + r, cy + k), (cx + k, cy + r),
        n, (cx - k, cy + r), (cx - r, cy + k),
        w, (cx - r, cy - k), (cx - k, cy - r),
        s, (cx + k, cy - r), (cx + r, cy - k),
    ], dtype=float)


def brute_winding(poly, px, py) -> int:
    """Crossing-number winding of a closed polygon at one point."""
    wn = 0
    n = len(poly)
    for i in range(n):
        (x0, y0), (x1, y1) = poly[i], poly[(i + 1) % n]
        side = (x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)
        if y0 <= py < y1 and side > 0:
            wn += 1
        elif y1 <= py < y0 and side < 0:
            wn -= 1
    return wn


def test_empty_glyph_is_black():
    img = render(VectorGlyph([], [], (64, 64)), RenderParams(canvas=64))
    assert img.values.shape == (64, 64) and not img.values.any()


def test_full_canvas_loop():
    g = VectorGlyph([polygon_loop([(0, 0), (32, 0), (32, 32), (0, 32)])], [], (32, 32))
    np.testing.assert_array_equal(render(g, RenderParams(canvas=32)).values, 1.0)


def test_circle_area():
    g = VectorGlyph([circle_loop(128, 128, 64)], [], (256, 256))
    total = render(g, RenderParams(canvas=256, supersample=4)).values.sum()
    assert abs(total - np.pi * 64 ** 2) / (np.pi * 64 ** 2) < 0.01


def test_orientation_does_not_matter():
    poly = [(3, 3), (20, 5), (12, 25)]
    a = render(VectorGlyph([polygon_loop(poly)], [], (32, 32)), RenderParams(canvas=32)).values
    b = render(VectorGlyph([polygon_loop(poly[::-1])], [], (32, 32)), RenderParams(canvas=32)).values
    np.testing.assert_array_equal(a, b)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6), n=st.integers(3, 9))
def test_winding_matches_brute_force(seed, n):
    r = np.random.default_rng(seed)
    poly = r.uniform(-2, 18, (n, 2))
    grid = SampleGrid(16, 16, 2, 1.0, 1.0)
    got = loop_winding(polygon_loop(poly), grid)
    ys, xs = (np.arange(32) + 0.5) / 2, (np.arange(32) + 0.5) / 2
    expect = np.array([[brute_winding(poly, x, y) for x in xs] for y in ys])
    # canvas y points down, so the renderer's sign is the mirror of the y-up oracle
    np.testing.assert_array_equal(got, -expect)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_window_is_exact_crop(seed):
    r = np.random.default_rng(seed)
    loop = r.uniform(-5, 37, (9, 2))
    grid = SampleGrid(32, 32, 3, 1.0, 1.0)
    full = loop_winding(loop, grid)
    r0, r1 = sorted(r.integers(0, 97, 2))
    c0, c1 = sorted(r.integers(0, 97, 2))
    if r0 == r1 or c0 == c1:
        return
    np.testing.assert_array_equal(loop_winding(loop, grid, (r0, r1, c0, c1)), full[r0:r1, c0:c1])


def test_loop_window_holds_all_nonzero_samples(rng):
    grid = SampleGrid(32, 32, 4, 1.0, 1.0)
    loop = rng.uniform(4, 20, (12, 2))
    full = loop_winding(loop, grid)
    r0, r1, c0, c1 = loop_window([loop], grid)
    outside = full.copy()
    outside[r0:r1, c0:c1] = 0
    assert not outside.any()
    assert r0 % 4 == 0 and c1 % 4 == 0
    assert loop_window([loop + 100], grid) is None


def test_render_components_single_label_equals_render():
    g = vectorize(corpus()["plus"])
    parts = render_components(g, ["all"] * len(g.loops), RenderParams(canvas=128))
    np.testing.assert_array_equal(parts["all"].values, render(g, RenderParams(canvas=128)).values)


def test_two_disjoint_squares():
    a = [(2, 2), (10, 2), (10, 10), (2, 10)]
    b = [(20, 20), (30, 20), (30, 30), (20, 30)]
    g = VectorGlyph([polygon_loop(a), polygon_loop(b)], [], (32, 32))
    parts = render_components(g, {0: "a", 1: "b"}, RenderParams(canvas=32))
    ea = np.zeros((32, 32))
    ea[2:10, 2:10] = 1
    eb = np.zeros((32, 32))
    eb[20:30, 20:30] = 1
    np.testing.assert_array_equal(parts["a"].values, ea)
    np.testing.assert_array_equal(parts["b"].values, eb)


@pytest.mark.parametrize("seed", range(5))
def test_component_max_bounded_by_full_render(seed):
    g = vectorize(corpus()["mountain"])
    r = np.random.default_rng(seed)
    labels = [str(v) for v in r.integers(0, 3, len(g.loops))]
    params = RenderParams(canvas=128, supersample=2)
    parts = render_components(g, labels, params)
    full = render(g, params).values
    stacked = np.max([p.values for p in parts.values()], axis=0)
    assert np.all(stacked <= full)


def test_unassigned_loop():
    g = vectorize(corpus()["plus"])
    with pytest.raises(ArgumentError, match="loop 3"):
        render_components(g, {0: "a", 1: "a", 2: "a"})


@pytest.mark.parametrize("name", ["bar", "ring", "river", "sun"])
def test_supersample_convergence(name):
    g = vectorize(corpus()[name])
    m4 = render(g, RenderParams(supersample=4)).values.sum()
    m8 = render(g, RenderParams(supersample=8)).values.sum()
    assert abs(m4 - m8) / m8 <= 0.005


def test_coverage_bounds_and_determinism():
    g = vectorize(corpus()["sun"])
    a = render(g).values
    assert a.min() >= 0.0 and a.max() <= 1.0
    np.testing.assert_array_equal(a, render(g).values)


def test_non_finite_loop():
    loop = polygon_loop([(1, 1), (5, 1), (5, 5)])
    loop[1, 0] = np.nan
    with pytest.raises(RenderError, match="loop 0"):
        render(VectorGlyph([loop], [], (16, 16)), RenderParams(canvas=16))


@pytest.mark.parametrize("kw", [dict(canvas=4), dict(supersample=0), dict(supersample=9),
                                dict(fill_rule="evenodd")])
def test_params_validation(kw):
    with pytest.raises(ArgumentError):
        RenderParams(**kw)
