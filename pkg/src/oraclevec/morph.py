"""Structure-constrained glyph morphing.

Minimizes ``guidance + w * L_GS + beta * L_SKST + gamma_t * L_tone`` over
the glyph's combined control points with an Adam-style update. The skeleton
term has an analytic gradient; raster terms (guidance, GS on coverage maps,
tone) use central finite differences at a reduced resolution over a seeded
random subset of contour points each step.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ArgumentError, ConfigError, DivergenceError, GuidanceError, NumericError
from .glyph import VectorGlyph
from .layout import LayoutAnnotation
from .maintenance import TONE_SIGMA, SkeletonAnchors, glyph_anchors, skst_gradient, skst_loss
from .raster import blur_array, downsample_array, ink_image, load_pgm
from .render import SampleGrid, coverage_from_winding, loop_window, loop_winding, render_loops
from .structural import DEFAULT_TOPK, MAP_RES, box_mask, region_losses

log = logging.getLogger(__name__)

TERMS = ("guidance", "gs", "skst", "tone")
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
GAMMA_MAX = 100.0


@dataclass(frozen=True)
class GuidanceSpec:
    """Semantic guidance stand-in: none, a target raster, or per-step gradient sidecars."""

    mode: str = "none"
    path: str | None = None
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.mode not in ("none", "target_image", "external_gradients"):
            raise ConfigError(f"unknown guidance mode {self.mode!r}")
        if self.mode == "target_image":
            if not self.path or not Path(self.path).is_file():
                raise GuidanceError(f"guidance target image not found: {self.path}")
        if self.mode == "external_gradients":
            if not self.path or not Path(self.path).is_dir():
                raise GuidanceError(f"guidance gradient directory not found: {self.path}")


@dataclass(frozen=True)
class MorphConfig:
    steps: int = 800
    learning_rate: float = 0.5
    w_gs: float = 1.0
    beta: float = 0.5
    gamma_schedule: tuple[tuple[float, float], ...] | None = None
    gamma_max: float = GAMMA_MAX
    topk: int = DEFAULT_TOPK
    guidance: GuidanceSpec = field(default_factory=GuidanceSpec)
    fd_step: float = 0.5
    fd_subset: int = 32
    fd_resolution: int = 64
    fd_supersample: int = 4
    tone_sigma: float = TONE_SIGMA
    seed: int = 0

    def __post_init__(self) -> None:
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if self.fd_step <= 0:
            raise ConfigError(f"fd_step must be > 0, got {self.fd_step}")
        if self.fd_subset < 1:
            raise ConfigError(f"fd_subset must be >= 1, got {self.fd_subset}")
        if self.fd_resolution < 8:
            raise ConfigError(f"fd_resolution must be >= 8, got {self.fd_resolution}")
        if not 1 <= self.topk <= MAP_RES * MAP_RES:
            raise ConfigError(f"topk must lie in [1, {MAP_RES * MAP_RES}], got {self.topk}")
        if self.gamma_schedule is not None:
            sched = tuple((float(s), float(g)) for s, g in self.gamma_schedule)
            if not sched or any(b[0] <= a[0] for a, b in zip(sched, sched[1:])):
                raise ConfigError("gamma_schedule needs strictly increasing steps")
            object.__setattr__(self, "gamma_schedule", sched)

    def schedule(self) -> tuple[tuple[float, float], ...]:
        """Explicit schedule, or a linear ramp from 0 to ``gamma_max`` at half the steps."""
        if self.gamma_schedule is not None:
            return self.gamma_schedule
        return ((0.0, 0.0), (max(self.steps / 2.0, 1.0), self.gamma_max))

    def gamma(self, step: int) -> float:
        sched = self.schedule()
        xs = [s for s, _ in sched]
        ys = [g for _, g in sched]
        return float(np.interp(step, xs, ys))


@dataclass
class MorphState:
    positions: np.ndarray
    step: int = 0
    trace: list[dict[str, float]] = field(default_factory=list)


# --------------------------------------------------------------------------
# Component assignment and inside-box measurement

def _box_weights(box, width: int, height: int) -> np.ndarray:
    """Fractional pixel-area overlap of a normalized box on a ``height x width`` grid."""
    x0, y0, x1, y1 = box

    def axis(lo: float, hi: float, n: int) -> np.ndarray:
        edges = np.arange(n)
        return np.clip(np.minimum(hi * n, edges + 1) - np.maximum(lo * n, edges), 0.0, 1.0)

    return axis(y0, y1, height)[:, None] * axis(x0, x1, width)[None, :]


def assign_components(glyph: VectorGlyph, layout: LayoutAnnotation, supersample: int = 2) -> list[str]:
    """Label for each loop: the box with the largest overlap of the loop's coverage.

    Ties go to the earlier component; loops overlapping no box go to the
    nearest box centre.
    """
    if glyph.is_empty() or not layout.components:
        raise ArgumentError("assignment needs at least one loop and one component")
    w, h = glyph.canvas
    grid = SampleGrid(w, h, supersample, 1.0, 1.0)
    weights = [_box_weights(c.box, w, h) for c in layout.components]
    centres = np.array([[(c.box[0] + c.box[2]) / 2 * w, (c.box[1] + c.box[3]) / 2 * h]
                        for c in layout.components])
    labels = []
    ys, xs = np.mgrid[0:h, 0:w] + 0.5
    for i in range(len(glyph.loops)):
        cov = render_loops(glyph, [i], grid)
        overlap = np.array([float((cov * wt).sum()) for wt in weights])
        if overlap.max() > 0:
            labels.append(layout.components[int(np.argmax(overlap))].label)
            continue
        mass = cov.sum()
        if mass > 0:
            c = np.array([(cov * xs).sum() / mass, (cov * ys).sum() / mass])
        else:
            c = glyph.loops[i].mean(axis=0)
        d = np.linalg.norm(centres - c, axis=1)
        labels.append(layout.components[int(np.argmin(d))].label)
    return labels


def inside_box_fraction(glyph: VectorGlyph, assignment: list[str], layout: LayoutAnnotation,
                        supersample: int = 4) -> dict[str, float]:
    """Per component: share of its rendered ink that falls inside its box."""
    w, h = glyph.canvas
    grid = SampleGrid(w, h, supersample, 1.0, 1.0)
    out = {}
    for comp in layout.components:
        idx = [i for i, lab in enumerate(assignment) if lab == comp.label]
        if not idx:
            out[comp.label] = 0.0
            continue
        cov = render_loops(glyph, idx, grid)
        mass = float(cov.sum())
        out[comp.label] = float((cov * _box_weights(comp.box, w, h)).sum() / mass) if mass > 0 else 0.0
    return out


# --------------------------------------------------------------------------
# Guidance sidecars

def load_external_gradients(directory: str | Path, step: int, n_points: int) -> np.ndarray:
    """Per-control-point gradient vectors from ``grad_{step}.json`` (a list of ``[gx, gy]``)."""
    path = Path(directory) / f"grad_{step}.json"
    if not path.is_file():
        raise GuidanceError(f"gradient file missing: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GuidanceError(f"{path}: invalid JSON ({exc.msg})") from None
    if isinstance(data, dict):
        data = data.get("gradients")
    try:
        arr = np.array(data, dtype=np.float64)
    except (TypeError, ValueError):
        raise GuidanceError(f"{path}: gradients must be a list of [gx, gy] pairs") from None
    if arr.shape != (n_points, 2):
        raise GuidanceError(f"{path}: expected {n_points} gradient vectors, got shape {arr.shape}")
    bad = np.nonzero(~np.all(np.isfinite(arr), axis=1))[0]
    if len(bad):
        raise GuidanceError(f"{path}: non-finite gradient at point {int(bad[0])}")
    return arr


# --------------------------------------------------------------------------
# Objective

class MorphContext:
    """Everything the objective needs besides the current positions."""

    def __init__(self, glyph: VectorGlyph, layout: LayoutAnnotation, config: MorphConfig,
                 assignment: list[str] | None = None, anchors: SkeletonAnchors | None = None):
        self.glyph = glyph
        self.layout = layout
        self.config = config
        self.assignment = assignment if assignment is not None else assign_components(glyph, layout)
        if len(self.assignment) != len(glyph.loops):
            raise ArgumentError("assignment must label every loop")
        self.anchors = anchors if anchors is not None else glyph_anchors(glyph)
        self.n_contour = glyph.n_contour
        self.slices = glyph.loop_slices()
        self.loop_of = np.concatenate([np.full(s.stop - s.start, k) for k, s in enumerate(self.slices)]) \
            if self.slices else np.zeros(0, np.int64)
        res = config.fd_resolution
        self.grid = SampleGrid.for_glyph(glyph, res, config.fd_supersample)
        self.labels = list(layout.labels)
        self.masks = {c.label: box_mask(c.box, MAP_RES) for c in layout.components}
        self.label_loops = {lab: [i for i, a in enumerate(self.assignment) if a == lab] for lab in self.labels}
        self.tone_sigma = config.tone_sigma * res / glyph.canvas[0]
        base = np.zeros(self.grid.shape, dtype=np.int32)
        for wl in self._windings(glyph.positions()):
            base += wl
        self.blurred_original = blur_array(coverage_from_winding(base, self.grid), self.tone_sigma)
        self.target = None
        if config.guidance.mode == "target_image":
            img = ink_image(load_pgm(config.guidance.path))
            self.target = downsample_array(img.values, res)

    # -- rasterization -----------------------------------------------------
    def loops_at(self, pos: np.ndarray) -> list[np.ndarray]:
        return [pos[s] for s in self.slices]

    def _windings(self, pos: np.ndarray) -> list[np.ndarray]:
        return [loop_winding(lp, self.grid).astype(np.int32) for lp in self.loops_at(pos)]

    def raster_active(self, step: int) -> bool:
        return self.config.w_gs != 0 or self.config.gamma(step) != 0 or self.target is not None

    def _component_terms(self, cov: np.ndarray, label: str) -> tuple[float, float]:
        return region_losses(downsample_array(cov, MAP_RES), self.masks[label], self.config.topk)

    def _raster_terms(self, cov: np.ndarray, comp_terms: dict[str, tuple[float, float]]) -> dict[str, float]:
        guidance = 0.0
        if self.target is not None:
            d = cov - self.target
            guidance = self.config.guidance.weight * float(np.mean(d * d))
        d = blur_array(cov, self.tone_sigma) - self.blurred_original
        tone = float(np.mean(d * d))
        gs = 0.0
        for lab in self.labels:
            ir, orr = comp_terms[lab]
            gs += ir + orr
        return {"guidance": guidance, "gs": gs, "tone": tone}

    def _state_cache(self, pos: np.ndarray) -> "_RasterCache":
        wind = self._windings(pos)
        total = np.zeros(self.grid.shape, dtype=np.int32)
        for wl in wind:
            total += wl
        comp_wind, comp_cov, comp_terms = {}, {}, {}
        for lab in self.labels:
            cw = np.zeros(self.grid.shape, dtype=np.int32)
            for i in self.label_loops[lab]:
                cw += wind[i]
            comp_wind[lab] = cw
            comp_cov[lab] = coverage_from_winding(cw, self.grid)
            comp_terms[lab] = self._component_terms(comp_cov[lab], lab)
        return _RasterCache(wind, total, coverage_from_winding(total, self.grid), comp_wind, comp_cov, comp_terms)

    def _probe(self, cache: "_RasterCache", loop_index: int, loop: np.ndarray) -> dict[str, float]:
        """Raster terms with one loop replaced, re-rasterizing only the affected window."""
        lab = self.assignment[loop_index]
        win = loop_window([cache.loops[loop_index], loop], self.grid)
        cov = cache.cov.copy()
        ccov = cache.comp_cov[lab].copy()
        if win is not None:
            r0, r1, c0, c1 = win
            ss = self.grid.ss
            nw = loop_winding(loop, self.grid, win)
            delta = nw - cache.wind[loop_index][r0:r1, c0:c1]
            pr = slice(r0 // ss, r1 // ss)
            pc = slice(c0 // ss, c1 // ss)
            cov[pr, pc] = coverage_from_winding(cache.total[r0:r1, c0:c1] + delta, self.grid)
            ccov[pr, pc] = coverage_from_winding(cache.comp_wind[lab][r0:r1, c0:c1] + delta, self.grid)
        ct = dict(cache.comp_terms)
        ct[lab] = self._component_terms(ccov, lab)
        return self._raster_terms(cov, ct)

    def combine(self, terms: dict[str, float], step: int) -> float:
        cfg = self.config
        return (terms["guidance"] + cfg.w_gs * terms["gs"] + cfg.beta * terms["skst"]
                + cfg.gamma(step) * terms["tone"])

    def raster_value(self, terms: dict[str, float], step: int) -> float:
        cfg = self.config
        return terms["guidance"] + cfg.w_gs * terms["gs"] + cfg.gamma(step) * terms["tone"]

    def raster_loss(self, pos: np.ndarray, step: int) -> float:
        """Raster part of the objective from a full re-render."""
        cache = self._state_cache(pos)
        return self.raster_value(self._raster_terms(cache.cov, cache.comp_terms), step)


@dataclass
class _RasterCache:
    wind: list[np.ndarray]
    total: np.ndarray
    cov: np.ndarray
    comp_wind: dict[str, np.ndarray]
    comp_cov: dict[str, np.ndarray]
    comp_terms: dict[str, tuple[float, float]]
    loops: list[np.ndarray] = field(default_factory=list)


def total_loss(state: MorphState, context: MorphContext) -> dict[str, float]:
    """Objective value and per-term breakdown at ``state.step``."""
    pos = state.positions
    cache = context._state_cache(pos)
    terms = context._raster_terms(cache.cov, cache.comp_terms)
    terms["skst"] = skst_loss(context.anchors, pos)
    terms = {k: terms[k] for k in TERMS}
    terms["total"] = context.combine(terms, state.step)
    return terms


def gradient(state: MorphState, context: MorphContext, rng: np.random.Generator | None = None,
             subset: np.ndarray | None = None, cache=None) -> np.ndarray:
    """Objective gradient: analytic skeleton term plus finite-difference raster terms.

    Raster gradients are taken only for ``subset`` contour points (a seeded
    random draw of ``fd_subset`` points when not given); other points get zero
    raster gradient this step.
    """
    cfg = context.config
    pos = state.positions
    grad = cfg.beta * skst_gradient(context.anchors, pos)
    if context.n_contour and context.raster_active(state.step):
        if subset is None:
            rng = rng if rng is not None else np.random.default_rng(cfg.seed)
            k = min(cfg.fd_subset, context.n_contour)
            subset = np.sort(rng.choice(context.n_contour, size=k, replace=False))
        cache = cache if cache is not None else context._state_cache(pos)
        cache.loops = context.loops_at(pos)
        h = cfg.fd_step
        for i in subset:
            i = int(i)
            li = int(context.loop_of[i])
            sl = context.slices[li]
            for c in (0, 1):
                pair = []
                for sign in (1.0, -1.0):
                    loop = pos[sl].copy()
                    loop[i - sl.start, c] += sign * h
                    pair.append(context.raster_value(context._probe(cache, li, loop), state.step))
                grad[i, c] += (pair[0] - pair[1]) / (2 * h)
    if cfg.guidance.mode == "external_gradients":
        grad = grad + load_external_gradients(cfg.guidance.path, state.step, len(pos))
    bad = np.nonzero(~np.all(np.isfinite(grad), axis=1))[0]
    if len(bad):
        raise NumericError(f"non-finite gradient at control point {int(bad[0])}")
    return grad


@dataclass
class MorphResult:
    glyph: VectorGlyph
    trace: list[dict[str, float]]
    assignment: list[str]

    def trace_csv(self) -> str:
        return trace_to_csv(self.trace)


def trace_to_csv(trace: list[dict[str, float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", *TERMS, "total"])
    for row in trace:
        writer.writerow([int(row["step"])] + [repr(float(row[k])) for k in (*TERMS, "total")])
    return buf.getvalue()


def optimize(glyph: VectorGlyph, layout: LayoutAnnotation, config: MorphConfig | None = None,
             callback: Callable[[MorphState], None] | None = None,
             context: MorphContext | None = None) -> MorphResult:
    """Run ``config.steps`` Adam steps; topology (loop and segment counts) is fixed.

    ``callback`` sees the state before each update, after its trace row is recorded.
    """
    config = config or MorphConfig()
    if glyph.is_empty():
        raise ArgumentError("morphing needs a glyph with at least one loop")
    ctx = context or MorphContext(glyph, layout, config)
    state = MorphState(glyph.positions().copy())
    if config.steps == 0:
        return MorphResult(glyph, [], ctx.assignment)
    rng = np.random.default_rng(config.seed)
    m = np.zeros_like(state.positions)
    v = np.zeros_like(state.positions)
    w, h = glyph.canvas
    lo = np.array([-0.5 * w, -0.5 * h])
    hi = np.array([1.5 * w, 1.5 * h])
    for t in range(config.steps):
        state.step = t
        cache = ctx._state_cache(state.positions)
        terms = ctx._raster_terms(cache.cov, cache.comp_terms)
        terms["skst"] = skst_loss(ctx.anchors, state.positions)
        row = {"step": float(t), **{k: terms[k] for k in TERMS}}
        row["total"] = ctx.combine(terms, t)
        state.trace.append(row)
        if callback is not None:
            callback(state)
        g = gradient(state, ctx, rng=rng, cache=cache)
        m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * g
        v = ADAM_BETA2 * v + (1 - ADAM_BETA2) * g * g
        mhat = m / (1 - ADAM_BETA1 ** (t + 1))
        vhat = v / (1 - ADAM_BETA2 ** (t + 1))
        state.positions = state.positions - config.learning_rate * mhat / (np.sqrt(vhat) + ADAM_EPS)
        out = np.nonzero(np.any((state.positions < lo) | (state.positions > hi), axis=1))[0]
        if len(out):
            p = int(out[0])
            raise DivergenceError(f"step {t}: control point {p} left the 2x canvas bound at "
                                  f"{state.positions[p].tolist()}")
        if t % 100 == 0:
            log.info("step %d total %.6f gs %.4f skst %.4f tone %.6f", t, row["total"], row["gs"],
                     row["skst"], row["tone"])
    state.step = config.steps
    return MorphResult(glyph.with_positions(state.positions), state.trace, ctx.assignment)


def with_overrides(config: MorphConfig, **kw) -> MorphConfig:
    return replace(config, **kw)
