"""SVG subset writer and reader for vector glyphs.

Writer: one ``<path>`` per loop using absolute ``M``/``C``/``Z``, black
nonzero fill, ``viewBox`` equal to the canvas, and the skeleton as polylines
inside a hidden ``<g id="skeleton">``. Reader: absolute ``M``/``C``/``L``/``Z``
only; ``L`` is promoted to a degree-elevated cubic.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from .bezier import line_segment
from .errors import ParseError
from .glyph import VectorGlyph, loop_from_segments
from .skeleton import SkeletonPath

SVG_NS = "http://www.w3.org/2000/svg"
DECIMALS = 4


def _num(v: float) -> str:
    s = f"{v:.{DECIMALS}f}"
    return "0.0000" if s == "-0.0000" else s


def _pt(p: np.ndarray) -> str:
    return f"{_num(p[0])} {_num(p[1])}"


def loop_path_data(loop: np.ndarray) -> str:
    body = loop.reshape(-1, 3, 2)
    parts = [f"M {_pt(body[0, 0])}"]
    n = len(body)
    for i in range(n):
        end = body[(i + 1) % n, 0]
        parts.append(f"C {_pt(body[i, 1])} {_pt(body[i, 2])} {_pt(end)}")
    parts.append("Z")
    return " ".join(parts)


def emit_svg(glyph: VectorGlyph) -> str:
    """Serialize a glyph; identical glyphs give byte-identical text."""
    w, h = glyph.canvas
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="{SVG_NS}" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        '  <g id="glyph" fill="#000000" fill-rule="nonzero" stroke="none">',
    ]
    for lp in glyph.loops:
        lines.append(f'    <path d="{loop_path_data(lp)}"/>')
    lines.append("  </g>")
    lines.append('  <g id="skeleton" display="none" fill="none" stroke="#0000ff">')
    for p in glyph.skeleton:
        pts = " ".join(f"{_num(x)},{_num(y)}" for x, y in p.points)
        closed = "true" if p.closed else "false"
        lines.append(f'    <polyline data-closed="{closed}" points="{pts}"/>')
    lines.append("  </g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


_CMD = re.compile(r"([A-Za-z])|([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)")


def _tokens(d: str) -> list[str | float]:
    out: list[str | float] = []
    pos = 0
    for m in _CMD.finditer(d):
        gap = d[pos:m.start()]
        if gap.strip(" \t\r\n,"):
            raise ParseError(f"unexpected characters {gap.strip()!r} in path data")
        pos = m.end()
        out.append(m.group(1) if m.group(1) else float(m.group(2)))
    if d[pos:].strip(" \t\r\n,"):
        raise ParseError(f"unexpected trailing characters {d[pos:].strip()!r} in path data")
    return out


def parse_path_data(d: str) -> list[np.ndarray]:
    """Loops (cyclic control arrays) from path data; each subpath must close with Z."""
    toks = _tokens(d)
    loops: list[np.ndarray] = []
    segs: list[np.ndarray] = []
    start = cur = None
    i = 0
    cmd_index = -1
    cmd = None

    def take(n: int) -> list[float]:
        nonlocal i
        vals = toks[i:i + n]
        if len(vals) < n or any(isinstance(v, str) for v in vals):
            raise ParseError(f"command {cmd_index} ({cmd}) has missing coordinates")
        i += n
        return vals  # type: ignore[return-value]

    while i < len(toks):
        tok = toks[i]
        if isinstance(tok, str):
            cmd = tok
            cmd_index += 1
            i += 1
            if cmd not in "MCLZ":
                raise ParseError(f"unsupported path command {cmd!r} at command index {cmd_index}")
            if cmd == "Z":
                if start is None:
                    raise ParseError(f"command {cmd_index} (Z) closes no subpath")
                if not np.array_equal(cur, start):
                    segs.append(line_segment(cur, start))
                if not segs:
                    raise ParseError(f"subpath closed at command {cmd_index} has no segments")
                loops.append(loop_from_segments(np.array(segs)))
                segs, start, cur = [], None, None
                continue
        elif cmd is None:
            raise ParseError("path data must start with a command")
        elif cmd == "Z":
            raise ParseError(f"coordinates after Z at command index {cmd_index}")
        if cmd == "M":
            if start is not None:
                raise ParseError(f"open subpath before command {cmd_index} (M)")
            start = cur = np.array(take(2))
            cmd = "L"  # implicit lineto for extra pairs
        elif cmd == "L":
            if cur is None:
                raise ParseError(f"command {cmd_index} (L) before any M")
            nxt = np.array(take(2))
            segs.append(line_segment(cur, nxt))
            cur = nxt
        elif cmd == "C":
            if cur is None:
                raise ParseError(f"command {cmd_index} (C) before any M")
            v = take(6)
            seg = np.array([cur, v[0:2], v[2:4], v[4:6]], dtype=np.float64)
            segs.append(seg)
            cur = seg[3]
    if start is not None:
        raise ParseError(f"open path: subpath not closed with Z by command {cmd_index}")
    return loops


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def parse_svg(text: str) -> VectorGlyph:
    """Read a glyph written by :func:`emit_svg` (or any document in the same subset)."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ParseError(f"not well-formed XML: {exc}") from None
    if _local(root.tag) != "svg":
        raise ParseError("root element is not <svg>")
    canvas = _canvas(root)
    loops: list[np.ndarray] = []
    skeleton: list[SkeletonPath] = []

    def visit(el: ET.Element, in_skeleton: bool) -> None:
        tag = _local(el.tag)
        if tag == "g" and el.get("id") == "skeleton":
            in_skeleton = True
        if tag == "polyline" and in_skeleton:
            skeleton.append(_polyline(el))
        elif tag == "path" and not in_skeleton:
            d = el.get("d")
            if d is None:
                raise ParseError("<path> without a d attribute")
            loops.extend(parse_path_data(d))
        for child in el:
            visit(child, in_skeleton)

    visit(root, False)
    return VectorGlyph(loops, skeleton, canvas)


def _canvas(root: ET.Element) -> tuple[int, int]:
    vb = root.get("viewBox")
    if vb:
        parts = vb.replace(",", " ").split()
        if len(parts) != 4:
            raise ParseError(f"malformed viewBox {vb!r}")
        return int(round(float(parts[2]))), int(round(float(parts[3])))
    try:
        return int(float(root.get("width", "256"))), int(float(root.get("height", "256")))
    except ValueError:
        raise ParseError("non-numeric width/height on <svg>") from None


def _polyline(el: ET.Element) -> SkeletonPath:
    raw = el.get("points", "").replace(",", " ").split()
    try:
        vals = [float(v) for v in raw]
    except ValueError:
        raise ParseError("non-numeric skeleton polyline points") from None
    if len(vals) % 2:
        raise ParseError("skeleton polyline has an odd number of coordinates")
    pts = np.array(vals, dtype=np.float64).reshape(-1, 2)
    return SkeletonPath(pts, closed=el.get("data-closed") == "true")


def load_svg(path: str | Path) -> VectorGlyph:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: cannot read file ({exc.strerror})") from None
    except UnicodeDecodeError:
        raise ParseError(f"{path}: not UTF-8 text") from None
    try:
        return parse_svg(text)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from None


def save_svg(glyph: VectorGlyph, path: str | Path) -> None:
    Path(path).write_text(emit_svg(glyph), encoding="utf-8")
