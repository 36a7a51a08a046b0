"""Vector glyph container.

A loop with ``S`` cubic segments is stored as a cyclic ``(3S, 2)`` array
``[a0, c0, d0, a1, c1, d1, ...]``: segment ``i`` runs
``a_i -> c_i -> d_i -> a_{i+1}`` and the last segment ends at ``a0``, so
closure holds by construction.

The combined control-point list used for deformation (``positions()``) is
every loop's control points in order followed by every skeleton point. For a
closed skeleton path the repeated closing point is not stored twice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .skeleton import SkeletonPath


def loop_from_segments(segs: np.ndarray) -> np.ndarray:
    """Cyclic control array from ``(S, 4, 2)`` segments whose joints coincide."""
    segs = np.asarray(segs, dtype=np.float64)
    return segs[:, :3].reshape(-1, 2).copy()


def loop_segments(loop: np.ndarray) -> np.ndarray:
    """``(S, 4, 2)`` segments of a cyclic control array."""
    loop = np.asarray(loop, dtype=np.float64)
    body = loop.reshape(-1, 3, 2)
    ends = np.roll(body[:, 0], -1, axis=0)
    return np.concatenate([body, ends[:, None]], axis=1)


def reverse_loop(loop: np.ndarray) -> np.ndarray:
    """Same outline traversed backwards, keeping the first anchor."""
    segs = loop_segments(loop)[::-1, ::-1]
    return loop_from_segments(segs)


@dataclass(frozen=True, eq=False)
class VectorGlyph:
    loops: list[np.ndarray] = field(default_factory=list)
    skeleton: list[SkeletonPath] = field(default_factory=list)
    canvas: tuple[int, int] = (256, 256)

    def __post_init__(self) -> None:
        loops = []
        for i, lp in enumerate(self.loops):
            arr = np.array(lp, dtype=np.float64).reshape(-1, 2)
            if len(arr) == 0 or len(arr) % 3:
                raise ValueError(f"loop {i} must hold 3 control points per segment")
            arr.setflags(write=False)
            loops.append(arr)
        object.__setattr__(self, "loops", loops)
        object.__setattr__(self, "skeleton", list(self.skeleton))
        object.__setattr__(self, "canvas", (int(self.canvas[0]), int(self.canvas[1])))

    # -- counts -------------------------------------------------------------
    @property
    def n_contour(self) -> int:
        return sum(len(lp) for lp in self.loops)

    @property
    def n_skeleton(self) -> int:
        return sum(len(p) - (1 if p.closed and len(p) > 1 else 0) for p in self.skeleton)

    def segment_counts(self) -> list[int]:
        return [len(lp) // 3 for lp in self.loops]

    def segments(self, index: int) -> np.ndarray:
        return loop_segments(self.loops[index])

    def is_empty(self) -> bool:
        return not self.loops

    # -- combined control points -------------------------------------------
    def contour_positions(self) -> np.ndarray:
        if not self.loops:
            return np.zeros((0, 2))
        return np.concatenate(self.loops)

    def skeleton_positions(self) -> np.ndarray:
        parts = [p.points[:-1] if p.closed and len(p) > 1 else p.points for p in self.skeleton]
        return np.concatenate(parts) if parts else np.zeros((0, 2))

    def positions(self) -> np.ndarray:
        return np.concatenate([self.contour_positions(), self.skeleton_positions()])

    def loop_slices(self) -> list[slice]:
        out, start = [], 0
        for lp in self.loops:
            out.append(slice(start, start + len(lp)))
            start += len(lp)
        return out

    def with_positions(self, pos: np.ndarray) -> "VectorGlyph":
        pos = np.asarray(pos, dtype=np.float64)
        if pos.shape != (self.n_contour + self.n_skeleton, 2):
            raise ValueError(f"expected {(self.n_contour + self.n_skeleton, 2)} positions, got {pos.shape}")
        loops = [pos[s].copy() for s in self.loop_slices()]
        skel, k = [], self.n_contour
        for p in self.skeleton:
            m = len(p) - (1 if p.closed and len(p) > 1 else 0)
            pts = pos[k:k + m]
            if p.closed and len(p) > 1:
                pts = np.vstack([pts, pts[:1]])
            skel.append(SkeletonPath(pts, closed=p.closed))
            k += m
        return VectorGlyph(loops, skel, self.canvas)

    def subset(self, loop_indices: list[int]) -> "VectorGlyph":
        return VectorGlyph([self.loops[i] for i in loop_indices], [], self.canvas)
