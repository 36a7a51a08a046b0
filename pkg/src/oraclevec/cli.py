"""Command-line interface.

Every subcommand accepts ``--config FILE``: a JSON object whose keys mirror
the long flag names (dashes or underscores). Explicit flags override the
file; unknown keys are rejected. Exit codes: 0 success, 2 argument or
configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .contour import OgvParams, vectorize
from .errors import ArgumentError, ConfigError, DataError, OracleVecError, ParseError
from .layout import load_layout
from .maintenance import glyph_anchors, glyph_distance, skst_loss
from .metrics import EvalReport, evaluate_captions, evaluate_layouts, read_jsonl
from .morph import GuidanceSpec, MorphConfig, MorphContext, inside_box_fraction, optimize
from .raster import GrayImage, binarize, encode_pgm, ink_image, load_pgm, otsu_threshold
from .render import RenderParams, render, render_components
from .structural import DEFAULT_TOPK, MAP_RES, boxes_to_masks, coverage_response_maps, gs_loss, load_response_maps
from .svgio import emit_svg, load_svg

log = logging.getLogger("oraclevec")

EXIT_OK, EXIT_ARGS, EXIT_DATA = 0, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _bool(v: Any) -> bool:
    if isinstance(v, bool):
        return v
    raise ValueError(f"expected true/false, got {v!r}")


def _schedule(v: Any) -> tuple[tuple[float, float], ...]:
    """``"0:0,400:100"`` on the command line or ``[[0, 0], [400, 100]]`` in a config file."""
    if isinstance(v, str):
        try:
            pairs = [tuple(float(x) for x in item.split(":")) for item in v.split(",") if item.strip()]
        except ValueError:
            raise ValueError(f"bad schedule {v!r}; expected step:gamma,step:gamma") from None
    else:
        pairs = [tuple(float(x) for x in item) for item in v]
    if not pairs or any(len(p) != 2 for p in pairs):
        raise ValueError("schedule needs step:gamma pairs")
    return tuple(pairs)  # type: ignore[return-value]


def _opt_float(v: Any) -> float | None:
    return None if v is None else float(v)


@dataclass(frozen=True)
class Option:
    convert: Callable[[Any], Any]
    default: Any
    help: str
    flag: bool = False


OPTIONS: dict[str, Option] = {
    "out": Option(str, None, "output path (default: stdout)"),
    "seed": Option(int, 0, "seed for every stochastic choice"),
    # raster input
    "invert": Option(_bool, False, "treat the input as light strokes on a dark background", flag=True),
    "auto_threshold": Option(_bool, False, "binarize at the Otsu threshold instead of --threshold", flag=True),
    "threshold": Option(float, 0.5, "ink threshold in (0, 1)"),
    # vectorization
    "stroke_width": Option(_opt_float, None, "stroke half-width in pixels (default: estimated)"),
    "window": Option(int, 5, "odd normal-smoothing window"),
    "spline_tolerance": Option(float, 0.5, "maximum cubic fit error in pixels"),
    "resample_spacing": Option(float, 3.0, "skeleton resampling spacing in pixels"),
    # rendering
    "canvas": Option(int, 256, "output pixels per side"),
    "supersample": Option(int, 4, "samples per axis per pixel"),
    # morphing
    "steps": Option(int, 800, "optimization steps"),
    "learning_rate": Option(float, 0.5, "step size in pixels"),
    "w_gs": Option(float, 1.0, "weight of the region-constraint term"),
    "beta": Option(float, 0.5, "weight of the skeleton-structure term"),
    "gamma_max": Option(float, 100.0, "tone weight reached at half the steps"),
    "gamma_schedule": Option(_schedule, None, "explicit tone schedule step:gamma,..."),
    "topk": Option(int, DEFAULT_TOPK, "Top-k count for region losses"),
    "fd_step": Option(float, 0.5, "finite-difference step in pixels"),
    "fd_subset": Option(int, 32, "contour points probed per step"),
    "fd_resolution": Option(int, 64, "raster resolution for finite differences"),
    "tone_sigma": Option(float, 8.0, "tone blur sigma in canvas pixels"),
    "guidance_mode": Option(str, "none", "none | target_image | external_gradients"),
    "guidance_path": Option(str, None, "target PGM or gradient directory"),
    "guidance_weight": Option(float, 1.0, "weight of target-image guidance"),
    "trace": Option(str, None, "loss-trace CSV path"),
    # scoring
    "maps": Option(str, None, "external response maps JSON"),
    "glyph": Option(str, None, "glyph SVG for coverage response maps"),
    "csv": Option(str, None, "per-sample CSV report path"),
    "pairs": Option(str, None, "JSON-lines file of {\"a\": svg, \"b\": svg} pairs"),
}

RASTER_IN = ["invert", "auto_threshold", "threshold"]
OGV = ["stroke_width", "window", "spline_tolerance", "resample_spacing"]
MORPH = ["steps", "learning_rate", "w_gs", "beta", "gamma_max", "gamma_schedule", "topk", "fd_step",
         "fd_subset", "fd_resolution", "tone_sigma", "guidance_mode", "guidance_path", "guidance_weight", "trace"]

SUBCOMMANDS: dict[str, tuple[str, list[str], list[str]]] = {
    "vectorize": ("raster glyph (PGM/PBM) to SVG", ["image"], ["out", *RASTER_IN, *OGV]),
    "morph": ("deform an SVG glyph toward a layout", ["svg", "layout"], ["out", "seed", *MORPH]),
    "score-skst": ("skeleton-structure loss of a deformed glyph", ["original", "deformed"], ["out"]),
    "score-gs": ("region-constraint loss of response maps against a layout", ["layout"],
                 ["out", "maps", "glyph", "topk", "canvas", "supersample"]),
    "masks": ("16x16 box masks of a layout", ["layout"], ["out"]),
    "render": ("render an SVG glyph to a dark-on-light PGM", ["svg"], ["out", "canvas", "supersample"]),
    "eval-miou": ("batch mIoU and count accuracy over layout pairs", ["records"], ["out", "csv"]),
    "eval-bleu": ("batch BLEU-4 over caption pairs", ["records"], ["out", "csv"]),
    "eval-distance": ("glyph Distance between SVG glyphs", ["paths*"], ["out", "csv", "pairs"]),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse exits 2 as well; keep one code path
        raise ArgumentError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oraclevec", description="Glyph vectorization and morphing toolkit.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name, (help_text, positionals, options) in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        for pos in positionals:
            if pos.endswith("*"):
                p.add_argument(pos[:-1], nargs="*")
            else:
                p.add_argument(pos)
        p.add_argument("--config", default=argparse.SUPPRESS, help="JSON file of option values")
        for key in options:
            opt = OPTIONS[key]
            flag = "--" + key.replace("_", "-")
            if opt.flag:
                p.add_argument(flag, action="store_true", default=argparse.SUPPRESS, help=opt.help)
            else:
                p.add_argument(flag, dest=key, default=argparse.SUPPRESS, help=opt.help)
    return parser


def resolve_options(command: str, ns: argparse.Namespace) -> dict[str, Any]:
    """Defaults, then ``--config`` values, then explicit flags; all converted and checked."""
    allowed = SUBCOMMANDS[command][2]
    values: dict[str, Any] = {k: OPTIONS[k].default for k in allowed}
    given = vars(ns)
    if "config" in given:
        path = given["config"]
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        for raw_key, value in data.items():
            key = raw_key.replace("-", "_")
            if key not in allowed:
                raise ConfigError(f"{path}: unknown key {raw_key!r} for {command}")
            values[key] = _convert(key, value, f"{path}: {raw_key}")
    for key in allowed:
        if key in given:
            values[key] = _convert(key, given[key], "--" + key.replace("_", "-"))
    return values


def _convert(key: str, value: Any, where: str) -> Any:
    if value is None:
        return None
    try:
        return OPTIONS[key].convert(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


# --------------------------------------------------------------------------
# Output helpers

def _write_text(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot write ({exc.strerror})") from None


def _write_bytes(data: bytes, path: str | None) -> None:
    if path is None:
        sys.stdout.buffer.write(data)
        return
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise DataError(f"{path}: cannot write ({exc.strerror})") from None


def _json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# Subcommands

def cmd_vectorize(ns, o) -> None:
    img = ink_image(load_pgm(ns.image), invert=o["invert"])
    t = otsu_threshold(img) if o["auto_threshold"] else o["threshold"]
    params = OgvParams(o["stroke_width"], o["window"], o["spline_tolerance"], o["resample_spacing"])
    glyph = vectorize(binarize(img, t), params)
    log.info("vectorized %s: %d loops, %d skeleton points", ns.image, len(glyph.loops), glyph.n_skeleton)
    _write_text(emit_svg(glyph), o["out"])


def morph_config(o: dict[str, Any]) -> MorphConfig:
    guidance = GuidanceSpec(o["guidance_mode"], o["guidance_path"], o["guidance_weight"])
    return MorphConfig(
        steps=o["steps"], learning_rate=o["learning_rate"], w_gs=o["w_gs"], beta=o["beta"],
        gamma_schedule=o["gamma_schedule"], gamma_max=o["gamma_max"], topk=o["topk"], guidance=guidance,
        fd_step=o["fd_step"], fd_subset=o["fd_subset"], fd_resolution=o["fd_resolution"],
        tone_sigma=o["tone_sigma"], seed=o["seed"],
    )


def cmd_morph(ns, o) -> None:
    glyph = load_svg(ns.svg)
    layout = load_layout(ns.layout)
    config = morph_config(o)
    ctx = MorphContext(glyph, layout, config)
    result = optimize(glyph, layout, config, context=ctx)
    if result.trace:
        frac = inside_box_fraction(result.glyph, result.assignment, layout)
        log.info("inside-box fraction: %s", {k: round(v, 4) for k, v in frac.items()})
    _write_text(emit_svg(result.glyph), o["out"])
    if o["trace"] is not None:
        _write_text(result.trace_csv(), o["trace"])


def cmd_score_skst(ns, o) -> None:
    original = load_svg(ns.original)
    deformed = load_svg(ns.deformed)
    if original.segment_counts() != deformed.segment_counts() or original.n_skeleton != deformed.n_skeleton:
        raise DataError(f"{ns.deformed}: topology differs from {ns.original}")
    anchors = glyph_anchors(original)
    out = {"skst": skst_loss(anchors, deformed.positions()), "anchors": len(anchors),
           "dropped": anchors.dropped, "excluded": list(anchors.excluded)}
    _write_text(_json(out), o["out"])


def cmd_score_gs(ns, o) -> None:
    layout = load_layout(ns.layout)
    masks = boxes_to_masks(layout)
    if (o["maps"] is None) == (o["glyph"] is None):
        raise ArgumentError("score-gs needs exactly one of --maps or --glyph")
    if o["maps"] is not None:
        maps = load_response_maps(o["maps"], MAP_RES)
    else:
        from .morph import assign_components

        glyph = load_svg(o["glyph"])
        params = RenderParams(o["canvas"], o["supersample"])
        rasters = render_components(glyph, assign_components(glyph, layout), params)
        empty = GrayImage(np.zeros((params.canvas, params.canvas)))
        maps = coverage_response_maps({lab: rasters.get(lab, empty) for lab in layout.labels})
    _write_text(_json(gs_loss(maps, masks, p=o["topk"]).to_dict()), o["out"])


def cmd_masks(ns, o) -> None:
    _write_text(boxes_to_masks(load_layout(ns.layout)).to_json() + "\n", o["out"])


def cmd_render(ns, o) -> None:
    glyph = load_svg(ns.svg)
    cov = render(glyph, RenderParams(o["canvas"], o["supersample"]))
    _write_bytes(encode_pgm(GrayImage(1.0 - cov.values)), o["out"])


def _emit_report(report: EvalReport, o) -> None:
    _write_text(report.to_json(), o["out"])
    if o["csv"] is not None:
        _write_text(report.to_csv(), o["csv"])


def cmd_eval_miou(ns, o) -> None:
    _emit_report(evaluate_layouts(read_jsonl(ns.records)), o)


def cmd_eval_bleu(ns, o) -> None:
    _emit_report(evaluate_captions(read_jsonl(ns.records)), o)


def cmd_eval_distance(ns, o) -> None:
    if o["pairs"] is not None:
        if ns.paths:
            raise ArgumentError("give either two SVG paths or --pairs, not both")
        pairs = []
        for n, rec in read_jsonl(o["pairs"]):
            if not isinstance(rec, dict) or "a" not in rec or "b" not in rec:
                raise ParseError(f"{o['pairs']}:{n}: record needs 'a' and 'b' paths")
            pairs.append((n, rec["a"], rec["b"]))
    elif len(ns.paths) == 2:
        pairs = [(1, ns.paths[0], ns.paths[1])]
    else:
        raise ArgumentError("eval-distance needs exactly two SVG paths or --pairs")
    report = EvalReport()
    for n, a, b in pairs:
        try:
            report.samples.append({"index": n, "distance": glyph_distance(load_svg(a), load_svg(b))})
        except OracleVecError as exc:
            report.skipped.append({"index": n, "reason": str(exc)})
    _emit_report(report, o)


HANDLERS = {
    "vectorize": cmd_vectorize, "morph": cmd_morph, "score-skst": cmd_score_skst, "score-gs": cmd_score_gs,
    "masks": cmd_masks, "render": cmd_render, "eval-miou": cmd_eval_miou, "eval-bleu": cmd_eval_bleu,
    "eval-distance": cmd_eval_distance,
}


def _setup_logging() -> None:
    level = os.environ.get("ORACLEVEC_LOG", "error").lower()
    if level not in LOG_LEVELS:
        raise ConfigError(f"ORACLEVEC_LOG must be one of {sorted(LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.getLogger("oraclevec").setLevel(LOG_LEVELS[level])


def run(argv: list[str] | None = None) -> int:
    """Run one subcommand; returns the process exit code."""
    try:
        _setup_logging()
        ns = build_parser().parse_args(argv)
        options = resolve_options(ns.command, ns)
        HANDLERS[ns.command](ns, options)
    except ArgumentError as exc:
        print(f"oraclevec: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except DataError as exc:
        print(f"oraclevec: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run())
