import json

import numpy as np
import pytest

from oraclevec.bezier import line_segment
from oraclevec.errors import ConfigError, DivergenceError, GuidanceError
from oraclevec.glyph import VectorGlyph, loop_from_segments
from oraclevec.layout import Component, LayoutAnnotation
from oraclevec.maintenance import skst_gradient, skst_loss
from oraclevec.raster import GrayImage, blur_array, save_pgm
from oraclevec.render import RenderParams, render, render_components
from oraclevec.skeleton import SkeletonPath
from oraclevec.structural import boxes_to_masks, coverage_response_maps, gs_loss
from oraclevec.svgio import emit_svg
from oraclevec.morph import (
    GuidanceSpec,
    MorphConfig,
    MorphContext,
    MorphState,
    assign_components,
    gradient,
    inside_box_fraction,
    load_external_gradients,
    optimize,
    total_loss,
    trace_to_csv,
)

CANVAS = 64
ZERO_GAMMA = ((0.0, 0.0), (1.0, 0.0))


def square(x0, y0, x1, y1):
    c = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)
    return loop_from_segments(np.array([line_segment(c[i], c[(i + 1) % 4]) for i in range(4)]))


def two_squares() -> VectorGlyph:
    loops = [square(10, 12, 22, 40), square(30, 14, 44, 44)]
    skel = [SkeletonPath([(16, 20), (16, 32)]), SkeletonPath([(37, 22), (37, 36)])]
    return VectorGlyph(loops, skel, (CANVAS, CANVAS))


def two_box_layout() -> LayoutAnnotation:
    return LayoutAnnotation("t", "c", (Component("a", (0.0, 0.0, 0.5, 1.0)),
                                       Component("b", (0.5, 0.0, 1.0, 1.0))))


def small_config(**kw) -> MorphConfig:
    base = dict(steps=5, fd_resolution=32, fd_subset=8, seed=3)
    base.update(kw)
    return MorphConfig(**base)


# -- configuration ---------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(steps=-1), dict(beta=-0.1), dict(fd_step=0), dict(fd_subset=0),
                                dict(fd_resolution=4), dict(topk=0), dict(topk=257),
                                dict(gamma_schedule=((5, 1), (5, 2)))])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        MorphConfig(**kw)


def test_default_gamma_ramp():
    cfg = MorphConfig(steps=800)
    assert cfg.gamma(0) == 0.0
    assert cfg.gamma(200) == pytest.approx(50.0)
    assert cfg.gamma(400) == 100.0 and cfg.gamma(799) == 100.0


def test_explicit_gamma_schedule():
    cfg = MorphConfig(gamma_schedule=[(0, 10), (10, 20), (20, 0)])
    assert [cfg.gamma(s) for s in (0, 5, 10, 15, 30)] == [10, 15, 20, 10, 0]


def test_guidance_spec_checks_paths(tmp_path):
    with pytest.raises(GuidanceError):
        GuidanceSpec("target_image", str(tmp_path / "none.pgm"))
    with pytest.raises(GuidanceError):
        GuidanceSpec("external_gradients", str(tmp_path / "none"))
    with pytest.raises(ConfigError):
        GuidanceSpec("sds")


# -- assignment ------------------------------------------------------------

def brute_overlap(glyph, i, box):
    """Coverage-weighted box overlap of one loop from 8x8 sub-samples."""
    cov = render(glyph.subset([i]), RenderParams(canvas=CANVAS, supersample=8)).values
    n = 64
    s = (np.arange(CANVAS * n) + 0.5) / n
    inside_x = ((s >= box[0] * CANVAS) & (s < box[2] * CANVAS)).reshape(CANVAS, n).mean(axis=1)
    inside_y = ((s >= box[1] * CANVAS) & (s < box[3] * CANVAS)).reshape(CANVAS, n).mean(axis=1)
    return float((cov * inside_y[:, None] * inside_x[None, :]).sum())


def test_loop_inside_one_box():
    g = VectorGlyph([square(5, 5, 20, 20)], [], (CANVAS, CANVAS))
    lay = LayoutAnnotation("t", "c", (Component("a", (0.5, 0.5, 1, 1)), Component("b", (0, 0, 0.4, 0.4))))
    assert assign_components(g, lay) == ["b"]


def test_two_loops_match_exhaustive_overlap_oracle():
    g = VectorGlyph([square(4, 4, 40, 20), square(24, 30, 60, 60)], [], (CANVAS, CANVAS))
    lay = LayoutAnnotation("t", "c", (Component("top", (0, 0, 1, 0.45)), Component("bottom", (0, 0.45, 1, 1))))
    expect = []
    for i in range(2):
        ov = [brute_overlap(g, i, c.box) for c in lay.components]
        expect.append(lay.components[int(np.argmax(ov))].label)
    assert assign_components(g, lay) == expect == ["top", "bottom"]


def test_loop_outside_every_box_goes_to_nearest_centre():
    g = VectorGlyph([square(50, 2, 60, 10)], [], (CANVAS, CANVAS))
    lay = LayoutAnnotation("t", "c", (Component("far", (0, 0.6, 0.3, 1)), Component("near", (0.5, 0.3, 0.7, 0.6))))
    assert assign_components(g, lay) == ["near"]


def test_assignment_tie_goes_to_earlier_component():
    g = VectorGlyph([square(24, 24, 40, 40)], [], (CANVAS, CANVAS))
    lay = LayoutAnnotation("t", "c", (Component("x", (0, 0, 0.5, 1)), Component("y", (0.5, 0, 1, 1))))
    assert assign_components(g, lay) == ["x"]


def test_inside_box_fraction():
    g = VectorGlyph([square(0, 0, 32, 64), square(16, 0, 48, 64)], [], (CANVAS, CANVAS))
    frac = inside_box_fraction(g, ["a", "b"], two_box_layout())
    assert frac["a"] == pytest.approx(1.0) and frac["b"] == pytest.approx(0.5)


# -- objective -------------------------------------------------------------

def test_initial_loss_without_raster_terms_is_zero():
    g = two_squares()
    ctx = MorphContext(g, two_box_layout(), small_config(w_gs=0.0, gamma_schedule=ZERO_GAMMA))
    terms = total_loss(MorphState(g.positions()), ctx)
    assert terms["total"] == 0.0 and terms["skst"] == 0.0


def test_components_filling_their_boxes_have_zero_gs():
    g = VectorGlyph([square(0, 0, 32, 64), square(32, 0, 64, 64)], [], (CANVAS, CANVAS))
    ctx = MorphContext(g, two_box_layout(), small_config())
    assert total_loss(MorphState(g.positions()), ctx)["gs"] == 0.0


def independent_terms(glyph, layout, assignment, config, step, blurred_original):
    params = RenderParams(canvas=config.fd_resolution, supersample=config.fd_supersample)
    cov = render(glyph, params).values
    sigma = config.tone_sigma * config.fd_resolution / glyph.canvas[0]
    tone = float(np.mean((blur_array(cov, sigma) - blurred_original) ** 2))
    maps = coverage_response_maps(render_components(glyph, assignment, params))
    gs = gs_loss(maps, boxes_to_masks(layout), p=config.topk).total
    return gs, tone


def test_random_state_matches_term_by_term_oracle():
    g = two_squares()
    lay = two_box_layout()
    cfg = small_config(steps=10)
    ctx = MorphContext(g, lay, cfg)
    params = RenderParams(canvas=cfg.fd_resolution, supersample=cfg.fd_supersample)
    sigma = cfg.tone_sigma * cfg.fd_resolution / CANVAS
    blurred = blur_array(render(g, params).values, sigma)
    r = np.random.default_rng(11)
    for step in (0, 3, 7):
        pos = g.positions() + r.normal(size=g.positions().shape) * 2.0
        terms = total_loss(MorphState(pos, step), ctx)
        moved = g.with_positions(pos)
        gs, tone = independent_terms(moved, lay, ctx.assignment, cfg, step, blurred)
        sk = skst_loss(ctx.anchors, pos)
        assert terms["gs"] == pytest.approx(gs, abs=1e-10)
        assert terms["tone"] == pytest.approx(tone, abs=1e-10)
        assert terms["skst"] == pytest.approx(sk, abs=1e-10)
        assert terms["guidance"] == 0.0
        expect = gs + cfg.beta * sk + cfg.gamma(step) * tone
        assert terms["total"] == pytest.approx(expect, abs=1e-10)


def test_target_image_guidance_term(tmp_path):
    g = two_squares()
    target = np.zeros((CANVAS, CANVAS))
    target[20:50, 20:50] = 1.0
    path = tmp_path / "target.pgm"
    save_pgm(GrayImage(1.0 - target), path)  # dark ink on light paper
    cfg = small_config(guidance=GuidanceSpec("target_image", str(path), weight=2.0))
    ctx = MorphContext(g, two_box_layout(), cfg)
    terms = total_loss(MorphState(g.positions()), ctx)
    cov = render(g, RenderParams(canvas=32, supersample=4)).values
    t32 = target.reshape(32, 2, 32, 2).mean(axis=(1, 3))
    assert terms["guidance"] == pytest.approx(2.0 * float(np.mean((cov - t32) ** 2)), abs=1e-12)


# -- gradient --------------------------------------------------------------

def test_gradient_without_raster_terms_is_skst_gradient():
    g = two_squares()
    cfg = small_config(w_gs=0.0, gamma_schedule=ZERO_GAMMA)
    ctx = MorphContext(g, two_box_layout(), cfg)
    pos = g.positions() + np.random.default_rng(1).normal(size=g.positions().shape) * 3
    np.testing.assert_array_equal(gradient(MorphState(pos), ctx), cfg.beta * skst_gradient(ctx.anchors, pos))


def test_gradient_zero_at_initial_glyph_without_guidance():
    g = two_squares()
    ctx = MorphContext(g, two_box_layout(), small_config(w_gs=0.0))
    assert not gradient(MorphState(g.positions(), 0), ctx).any()


def test_subset_fd_equals_dense_fd():
    g = two_squares()
    cfg = small_config(steps=10)
    ctx = MorphContext(g, two_box_layout(), cfg)
    pos = g.positions() + np.random.default_rng(5).normal(size=g.positions().shape)
    state = MorphState(pos, 4)
    assert len(pos) <= 40
    got = gradient(state, ctx, subset=np.arange(g.n_contour))
    dense = cfg.beta * skst_gradient(ctx.anchors, pos)
    h = cfg.fd_step
    for i in range(g.n_contour):
        for c in (0, 1):
            up = pos.copy()
            up[i, c] += h
            dn = pos.copy()
            dn[i, c] -= h
            dense[i, c] += (ctx.raster_loss(up, 4) - ctx.raster_loss(dn, 4)) / (2 * h)
    assert np.abs(dense[:g.n_contour]).max() > 0
    np.testing.assert_allclose(got, dense, rtol=0, atol=1e-12)


def test_non_subset_points_get_no_raster_gradient():
    g = two_squares()
    cfg = small_config(beta=0.0)
    ctx = MorphContext(g, two_box_layout(), cfg)
    grad = gradient(MorphState(g.positions(), 2), ctx, subset=np.array([0, 5]))
    assert set(np.nonzero(np.any(grad != 0, axis=1))[0].tolist()) <= {0, 5}


# -- external gradients ----------------------------------------------------

def write_grads(directory, step, arr):
    (directory / f"grad_{step}.json").write_text(json.dumps(np.asarray(arr).tolist()))


def external_config(tmp_path, **kw):
    return small_config(w_gs=0.0, gamma_schedule=ZERO_GAMMA,
                        guidance=GuidanceSpec("external_gradients", str(tmp_path)), **kw)


def test_zero_external_gradient_leaves_points(tmp_path):
    g = two_squares()
    write_grads(tmp_path, 0, np.zeros((len(g.positions()), 2)))
    res = optimize(g, two_box_layout(), external_config(tmp_path, steps=1))
    np.testing.assert_array_equal(res.glyph.positions(), g.positions())


def test_constant_external_gradient_single_adam_step(tmp_path):
    g = two_squares()
    n = len(g.positions())
    write_grads(tmp_path, 0, np.tile([1.0, 0.0], (n, 1)))
    cfg = external_config(tmp_path, steps=1, learning_rate=0.5)
    res = optimize(g, two_box_layout(), cfg)
    # after bias correction m_hat = g and v_hat = g^2
    step = 0.5 * 1.0 / (1.0 + 1e-8)
    expect = g.positions() - [step, 0.0]
    np.testing.assert_allclose(res.glyph.positions(), expect, rtol=0, atol=1e-12)


def test_missing_gradient_file_names_path(tmp_path):
    g = two_squares()
    with pytest.raises(GuidanceError, match="grad_0.json"):
        optimize(g, two_box_layout(), external_config(tmp_path, steps=1))


def test_external_gradient_validation(tmp_path):
    write_grads(tmp_path, 2, [[0, 0], [1, 1]])
    with pytest.raises(GuidanceError, match="expected 3"):
        load_external_gradients(tmp_path, 2, 3)
    (tmp_path / "grad_3.json").write_text('[[0, 0], [NaN, 1]]')
    with pytest.raises(GuidanceError, match="point 1"):
        load_external_gradients(tmp_path, 3, 2)
    (tmp_path / "grad_4.json").write_text('{"gradients": [[1, 2]]}')
    np.testing.assert_array_equal(load_external_gradients(tmp_path, 4, 1), [[1, 2]])


# -- optimize --------------------------------------------------------------

def test_zero_steps_returns_input():
    g = two_squares()
    res = optimize(g, two_box_layout(), small_config(steps=0))
    assert res.glyph is g and res.trace == []


def test_fixed_point_without_raster_terms():
    g = two_squares()
    res = optimize(g, two_box_layout(), small_config(steps=6, w_gs=0.0, gamma_schedule=ZERO_GAMMA))
    np.testing.assert_array_equal(res.glyph.positions(), g.positions())
    assert emit_svg(res.glyph) == emit_svg(g)


def test_topology_preserved_and_trace_consistent():
    g = two_squares()
    lay = two_box_layout()
    cfg = small_config(steps=6)
    ctx = MorphContext(g, lay, cfg)
    seen = []
    res = optimize(g, lay, cfg, callback=lambda s: seen.append((s.step, s.positions.copy())), context=ctx)
    assert res.glyph.segment_counts() == g.segment_counts()
    assert len(res.glyph.loops) == len(g.loops) and res.glyph.n_skeleton == g.n_skeleton
    assert len(res.trace) == cfg.steps == len(seen)
    for row, (step, pos) in zip(res.trace, seen):
        again = total_loss(MorphState(pos, step), ctx)
        for k in ("guidance", "gs", "skst", "tone", "total"):
            assert row[k] == pytest.approx(again[k], abs=1e-10)
    assert not np.array_equal(res.glyph.positions(), g.positions())


def test_seeded_runs_are_byte_identical():
    g = two_squares()
    a = optimize(g, two_box_layout(), small_config(steps=4, seed=7))
    b = optimize(g, two_box_layout(), small_config(steps=4, seed=7))
    assert emit_svg(a.glyph) == emit_svg(b.glyph)
    assert a.trace_csv() == b.trace_csv()


def test_trace_csv_format():
    csv = trace_to_csv([{"step": 0.0, "guidance": 0.0, "gs": 1.5, "skst": 0.0, "tone": 0.25, "total": 1.5}])
    assert csv == "step,guidance,gs,skst,tone,total\n0,0.0,1.5,0.0,0.25,1.5\n"


def test_divergence_guard():
    g = two_squares()
    with pytest.raises(DivergenceError, match="control point"):
        optimize(g, two_box_layout(), small_config(steps=3, learning_rate=500.0))
