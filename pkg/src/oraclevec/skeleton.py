"""Zhang-Suen thinning, skeleton path tracing and arc-length resampling."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ArgumentError
from .raster import Bitmap

log = logging.getLogger(__name__)

_EIGHT = np.ones((3, 3), dtype=bool)

# Clockwise neighbour offsets (drow, dcol) starting north: P2 .. P9.
_RING = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


@dataclass(frozen=True, eq=False)
class SkeletonPath:
    """Ordered skeleton points as ``(x, y)`` rows. Closed paths repeat the first point last."""

    points: np.ndarray
    closed: bool = False

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def length(self) -> float:
        if len(self.points) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())


@dataclass(frozen=True)
class SkeletonSet:
    paths: list[SkeletonPath] = field(default_factory=list)
    junctions: list[tuple[int, int]] = field(default_factory=list)

    def to_json(self) -> str:
        """Debug dump: a list of point arrays plus junctions."""
        return json.dumps({
            "paths": [{"closed": p.closed, "points": p.points.tolist()} for p in self.paths],
            "junctions": [list(j) for j in self.junctions],
        })


# --------------------------------------------------------------------------
# Thinning

def _ring_planes(img: np.ndarray) -> list[np.ndarray]:
    """Neighbour planes P2..P9 of a zero-padded image (views, same shape as interior)."""
    h, w = img.shape[0] - 2, img.shape[1] - 2
    return [img[1 + dr:1 + dr + h, 1 + dc:1 + dc + w] for dr, dc in _RING]


def _candidates(img: np.ndarray, first: bool) -> np.ndarray:
    p = _ring_planes(img)
    core = img[1:-1, 1:-1].astype(bool)
    b = sum(x.astype(np.int8) for x in p)
    a = sum(((p[i] == 0) & (p[(i + 1) % 8] == 1)).astype(np.int8) for i in range(8))
    p2, _, p4, _, p6, _, p8, _ = p
    if first:
        c3 = (p2 & p4 & p6) == 0
        c4 = (p4 & p6 & p8) == 0
    else:
        c3 = (p2 & p4 & p8) == 0
        c4 = (p2 & p6 & p8) == 0
    return core & (b >= 2) & (b <= 6) & (a == 1) & c3 & c4


def _deletable(img: np.ndarray, r: int, c: int, first: bool) -> bool:
    n = [int(img[r + dr, c + dc]) for dr, dc in _RING]
    b = sum(n)
    if not 2 <= b <= 6:
        return False
    if sum(1 for i in range(8) if n[i] == 0 and n[(i + 1) % 8] == 1) != 1:
        return False
    p2, _, p4, _, p6, _, p8, _ = n
    if first:
        return p2 * p4 * p6 == 0 and p4 * p6 * p8 == 0
    return p2 * p4 * p8 == 0 and p2 * p6 * p8 == 0


def _same_topology(before: np.ndarray, after: np.ndarray) -> bool:
    """True when every 8-component of ``before`` holds exactly one component of ``after``."""
    lb, nb = ndimage.label(before, structure=_EIGHT)
    la, na = ndimage.label(after, structure=_EIGHT)
    if na != nb:
        return False
    mask = after.astype(bool)
    pairs = np.unique(np.stack([lb[mask], la[mask]]), axis=1)
    return pairs.shape[1] == nb and len(np.unique(pairs[0])) == nb


def _subiteration(img: np.ndarray, first: bool) -> bool:
    """Apply one ZS sub-iteration in place on a padded image; return whether anything changed."""
    cand = _candidates(img, first)
    if not cand.any():
        return False
    interior = img[1:-1, 1:-1]
    before = interior.copy()
    interior[cand] = 0
    if _same_topology(before, interior):
        return True
    # Parallel deletion broke a component (2x2 blocks, 2-px diagonals): redo the
    # sub-iteration sequentially in raster order on the live image.
    interior[...] = before
    changed = False
    for r, c in zip(*np.nonzero(cand)):
        if _deletable(img, r + 1, c + 1, first):
            img[r + 1, c + 1] = 0
            changed = True
    return changed


def _connectivity8(img: np.ndarray, r: int, c: int) -> int:
    """Yokoi 8-connectivity number; 1 means deleting the pixel keeps topology."""
    ring = [img[r, c + 1], img[r - 1, c + 1], img[r - 1, c], img[r - 1, c - 1],
            img[r, c - 1], img[r + 1, c - 1], img[r + 1, c], img[r + 1, c + 1]]
    x = [1 - int(v) for v in ring]
    return sum(x[k] - x[k] * x[k + 1] * x[(k + 2) % 8] for k in (0, 2, 4, 6))


def _break_blocks(img: np.ndarray) -> bool:
    """Delete one topology-simple pixel from each remaining 2x2 block (raster order)."""
    changed = False
    core = img[1:-1, 1:-1]
    blocks = core[:-1, :-1] & core[1:, :-1] & core[:-1, 1:] & core[1:, 1:]
    for r, c in zip(*np.nonzero(blocks)):
        r, c = r + 1, c + 1
        if not (img[r, c] and img[r + 1, c] and img[r, c + 1] and img[r + 1, c + 1]):
            continue
        for pr, pc in ((r, c), (r, c + 1), (r + 1, c), (r + 1, c + 1)):
            if _connectivity8(img, pr, pc) == 1:
                img[pr, pc] = 0
                changed = True
                break
    return changed


def zhang_suen_thin(img: Bitmap) -> Bitmap:
    """Zhang-Suen thinning; pixels outside the image count as background.

    Classic ZS can leave 2x2 blocks where every pixel fails the deletion
    test; those are broken by removing a simple pixel, and thinning resumes
    until neither step changes anything.
    """
    work = np.pad(img.pixels, 1).astype(np.uint8)
    while True:
        while True:
            changed = _subiteration(work, first=True)
            changed |= _subiteration(work, first=False)
            if not changed:
                break
        if not _break_blocks(work):
            break
    return Bitmap(work[1:-1, 1:-1])


# --------------------------------------------------------------------------
# Path tracing

def _m_neighbours(img: np.ndarray) -> dict[tuple[int, int], list[tuple[int, int]]]:
    """Skeleton graph under m-adjacency (diagonals only when no shared 4-neighbour)."""
    pad = np.pad(img, 1)
    adj: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for r, c in zip(*np.nonzero(img)):
        r, c = int(r), int(c)
        pr, pc = r + 1, c + 1
        nbs = []
        for dr, dc in _RING:
            if not pad[pr + dr, pc + dc]:
                continue
            if dr and dc and (pad[pr + dr, pc] or pad[pr, pc + dc]):
                continue
            nbs.append((r + dr, c + dc))
        adj[(r, c)] = nbs
    return adj


def _as_path(pixels: list[tuple[int, int]], closed: bool = False) -> SkeletonPath:
    return SkeletonPath(np.array([(c, r) for r, c in pixels], dtype=np.float64), closed=closed)


def trace_paths(skeleton: Bitmap) -> SkeletonSet:
    """Split a thinned raster into ordered paths broken at junctions.

    Endpoints start paths first, then junctions; junction pixels are appended to
    every incident path. Remaining pure cycles become closed paths.
    """
    adj = _m_neighbours(skeleton.pixels)
    if not adj:
        return SkeletonSet()
    degree = {p: len(n) for p, n in adj.items()}
    junctions = sorted(p for p, d in degree.items() if d >= 3)
    used: set[frozenset] = set()
    on_path: set[tuple[int, int]] = set()
    paths: list[SkeletonPath] = []

    def walk(start: tuple[int, int], nxt: tuple[int, int]) -> list[tuple[int, int]]:
        seq = [start, nxt]
        used.add(frozenset((start, nxt)))
        prev, cur = start, nxt
        while degree[cur] == 2 and cur != start:
            step = next((q for q in adj[cur] if frozenset((cur, q)) not in used), None)
            if step is None:
                break
            used.add(frozenset((cur, step)))
            seq.append(step)
            prev, cur = cur, step
        return seq

    starts = sorted(p for p, d in degree.items() if d == 1) + junctions
    for s in starts:
        for q in adj[s]:
            if frozenset((s, q)) in used:
                continue
            seq = walk(s, q)
            on_path.update(seq)
            paths.append(_as_path(seq, closed=seq[0] == seq[-1]))

    for p in sorted(p for p, d in degree.items() if d == 0):
        on_path.add(p)
        paths.append(_as_path([p]))

    for p in sorted(adj):
        if p in on_path:
            continue
        seq = walk(p, adj[p][0])
        on_path.update(seq)
        if seq[-1] != seq[0]:
            seq.append(seq[0])
        paths.append(_as_path(seq, closed=True))

    return SkeletonSet(paths=paths, junctions=[(c, r) for r, c in junctions])


# --------------------------------------------------------------------------
# Resampling

def resample_path(path: SkeletonPath, spacing: float) -> SkeletonPath:
    """Arc-length-uniform resampling keeping both endpoints."""
    if spacing <= 0:
        raise ArgumentError(f"spacing must be > 0, got {spacing}")
    pts = path.points
    if len(pts) < 2:
        raise ArgumentError("cannot resample a single-point path")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total == 0:
        return SkeletonPath(pts[[0, -1]], closed=path.closed)
    n_seg = max(1, int(round(total / spacing)))
    targets = total * np.arange(n_seg + 1) / n_seg
    keep = np.concatenate([[True], seg > 0])  # np.interp needs increasing abscissae
    out = np.column_stack([np.interp(targets, s[keep], pts[keep, 0]),
                           np.interp(targets, s[keep], pts[keep, 1])])
    out[0], out[-1] = pts[0], pts[-1]
    return SkeletonPath(out, closed=path.closed)
