"""Incremental Bowyer-Watson Delaunay triangulation with exact predicates.

Hull edges carry "ghost" triangles ``(u, v, GHOST)`` whose circumdisk is the open
half-plane left of ``u -> v`` plus the open segment ``uv``; this avoids a
finite super-triangle and keeps hull triangles correct.

Predicates use a float filter and fall back to exact rational arithmetic
when the determinant is within a 1e-10 relative margin of zero. Points
exactly on a circumcircle are treated as outside, so cocircular input gives
a valid (weak) Delaunay triangulation that depends only on input order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DegeneracyError

GHOST = -1
_MARGIN = 1e-10


def orient2d(a, b, c) -> int:
    """Sign of twice the signed area of ``abc`` (positive = counter-clockwise)."""
    l = (b[0] - a[0]) * (c[1] - a[1])
    r = (b[1] - a[1]) * (c[0] - a[0])
    det = l - r
    if abs(det) > _MARGIN * (abs(l) + abs(r)):
        return 1 if det > 0 else -1
    fa = [Fraction(v) for v in (*a, *b, *c)]
    ax, ay, bx, by, cx, cy = fa
    exact = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    return (exact > 0) - (exact < 0)


def incircle(a, b, c, d) -> int:
    """Positive when ``d`` lies strictly inside the circle through CCW ``a, b, c``."""
    adx, ady = a[0] - d[0], a[1] - d[1]
    bdx, bdy = b[0] - d[0], b[1] - d[1]
    cdx, cdy = c[0] - d[0], c[1] - d[1]
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    t1 = alift * (bdx * cdy - cdx * bdy)
    t2 = blift * (cdx * ady - adx * cdy)
    t3 = clift * (adx * bdy - bdx * ady)
    det = t1 + t2 + t3
    perm = (alift * (abs(bdx * cdy) + abs(cdx * bdy))
            + blift * (abs(cdx * ady) + abs(adx * cdy))
            + clift * (abs(adx * bdy) + abs(bdx * ady)))
    if abs(det) > _MARGIN * perm:
        return 1 if det > 0 else -1
    ax, ay, bx, by, cx, cy, dx, dy = (Fraction(v) for v in (*a, *b, *c, *d))
    adx, ady, bdx, bdy, cdx, cdy = ax - dx, ay - dy, bx - dx, by - dy, cx - dx, cy - dy
    exact = ((adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
             + (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy)
             + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady))
    return (exact > 0) - (exact < 0)


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Vertices and counter-clockwise index triples.

    ``source_index`` optionally maps each entry of an original point list
    (with duplicates) to its vertex.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    source_index: np.ndarray | None = None

    def to_json(self) -> str:
        return json.dumps({"vertices": self.vertices.tolist(), "triangles": self.triangles.tolist()})

    def incident(self) -> list[list[int]]:
        """Triangle indices incident to each vertex, ascending."""
        out: list[list[int]] = [[] for _ in range(len(self.vertices))]
        for k, tri in enumerate(self.triangles):
            for v in tri:
                out[int(v)].append(k)
        return out


class _Builder:
    def __init__(self, pts: list[tuple[float, float]]):
        self.pts = pts
        self.tris: dict[int, tuple[int, int, int]] = {}
        self.edge: dict[tuple[int, int], int] = {}
        self.next_id = 0
        self.last = -1

    def add(self, a: int, b: int, c: int) -> int:
        tid = self.next_id
        self.next_id += 1
        self.tris[tid] = (a, b, c)
        self.edge[(a, b)] = tid
        self.edge[(b, c)] = tid
        self.edge[(c, a)] = tid
        if GHOST not in (a, b, c):
            self.last = tid
        return tid

    def remove(self, tid: int) -> None:
        a, b, c = self.tris.pop(tid)
        for e in ((a, b), (b, c), (c, a)):
            if self.edge.get(e) == tid:
                del self.edge[e]

    @staticmethod
    def _ghost_edge(tri: tuple[int, int, int]) -> tuple[int, int]:
        a, b, c = tri
        if c == GHOST:
            return a, b
        if a == GHOST:
            return b, c
        return c, a

    def in_disk(self, tid: int, p: int) -> bool:
        tri = self.tris[tid]
        P = self.pts
        if GHOST in tri:
            u, v = self._ghost_edge(tri)
            o = orient2d(P[u], P[v], P[p])
            if o > 0:
                return True
            if o < 0:
                return False
            # collinear: inside only when strictly between u and v
            pu, pv, pp = P[u], P[v], P[p]
            dot = (pp[0] - pu[0]) * (pv[0] - pu[0]) + (pp[1] - pu[1]) * (pv[1] - pu[1])
            return 0 < dot < (pv[0] - pu[0]) ** 2 + (pv[1] - pu[1]) ** 2
        a, b, c = tri
        return incircle(P[a], P[b], P[c], P[p]) > 0

    def locate(self, p: int) -> int:
        P = self.pts
        tid = self.last if self.last in self.tris else next(iter(self.tris))
        for _ in range(4 * len(self.tris) + 10):
            tri = self.tris[tid]
            if GHOST in tri:
                return tid
            moved = False
            for i in range(3):
                u, v = tri[i], tri[(i + 1) % 3]
                if orient2d(P[u], P[v], P[p]) < 0:
                    tid = self.edge[(v, u)]
                    moved = True
                    break
            if not moved:
                return tid
        for tid in self.tris:  # walk failed to settle; exhaustive fallback
            if self.in_disk(tid, p):
                return tid
        raise DegeneracyError("point location failed")

    def insert(self, p: int) -> None:
        seed = self.locate(p)
        if not self.in_disk(seed, p):
            seed = next(t for t in self.tris if self.in_disk(t, p))
        cavity = {seed}
        stack = [seed]
        boundary: list[tuple[int, int]] = []
        while stack:
            tid = stack.pop()
            a, b, c = self.tris[tid]
            for u, v in ((a, b), (b, c), (c, a)):
                nb = self.edge.get((v, u))
                if nb is None:
                    continue
                if nb in cavity:
                    continue
                if self.in_disk(nb, p):
                    cavity.add(nb)
                    stack.append(nb)
        for tid in cavity:
            a, b, c = self.tris[tid]
            for u, v in ((a, b), (b, c), (c, a)):
                if self.edge.get((v, u)) not in cavity:
                    boundary.append((u, v))
        for tid in sorted(cavity):
            self.remove(tid)
        for u, v in boundary:
            self.add(u, v, p)


def delaunay(points) -> Triangulation:
    """Delaunay triangulation of distinct, not-all-collinear 2D points."""
    arr = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(arr) < 3:
        raise DegeneracyError(f"need at least 3 points, got {len(arr)}")
    if not np.all(np.isfinite(arr)):
        raise DegeneracyError("points must be finite")
    uniq = np.unique(arr, axis=0)
    if len(uniq) != len(arr):
        raise DegeneracyError(f"{len(arr) - len(uniq)} duplicate point(s); remove duplicates first")
    pts = [(float(x), float(y)) for x, y in arr]
    i0, i1 = 0, 1
    i2 = next((k for k in range(2, len(pts)) if orient2d(pts[i0], pts[i1], pts[k]) != 0), None)
    if i2 is None:
        raise DegeneracyError("all points are collinear")
    b = _Builder(pts)
    if orient2d(pts[i0], pts[i1], pts[i2]) < 0:
        i1, i2 = i2, i1
    b.add(i0, i1, i2)
    b.add(i1, i0, GHOST)
    b.add(i2, i1, GHOST)
    b.add(i0, i2, GHOST)
    for p in range(len(pts)):
        if p not in (i0, i1, i2):
            b.insert(p)
    tris = []
    for tri in b.tris.values():
        if GHOST in tri:
            continue
        r = tri.index(min(tri))
        tris.append(tri[r:] + tri[:r])
    tris.sort()
    return Triangulation(arr.copy(), np.array(tris, dtype=np.int64).reshape(-1, 3))


def circumcircle_violations(tri: Triangulation) -> list[tuple[int, int]]:
    """Brute-force check: (triangle, vertex) pairs with the vertex strictly inside the circumcircle."""
    P = [tuple(map(float, p)) for p in tri.vertices]
    bad = []
    for k, (a, b, c) in enumerate(tri.triangles):
        for v in range(len(P)):
            if v in (a, b, c):
                continue
            if incircle(P[a], P[b], P[c], P[v]) > 0:
                bad.append((k, v))
    return bad
