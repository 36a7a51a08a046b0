"""Layout masks, cross-attention response maps and Top-k region constraints."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, ConfigError, DegeneracyError, ParseError
from .layout import LayoutAnnotation
from .raster import GrayImage, blur_array, downsample_array

MAP_RES = 16
DEFAULT_TOPK = 16
DEFAULT_MAP_SIGMA = 1.0


@dataclass(frozen=True, eq=False)
class MaskSet:
    """Binary ``res x res`` mask per component label, rows = y, columns = x."""

    masks: dict[str, np.ndarray]

    def __getitem__(self, label: str) -> np.ndarray:
        return self.masks[label]

    def to_json(self) -> str:
        return json.dumps({k: v.astype(int).tolist() for k, v in self.masks.items()})


@dataclass(frozen=True, eq=False)
class ResponseMaps:
    """Nonnegative spatial response maps keyed by token index or label."""

    maps: dict
    source: str = "external"

    def __post_init__(self) -> None:
        if self.source not in ("attention", "coverage", "external"):
            raise ArgumentError(f"unknown response-map source {self.source!r}")
        for key, m in self.maps.items():
            if not np.all(np.isfinite(m)) or np.any(m < 0):
                raise ArgumentError(f"response map {key!r} must be finite and nonnegative")

    def __getitem__(self, key):
        return self.maps[key]


@dataclass(frozen=True, eq=False)
class AttentionInputs:
    """Pre-projected queries (spatial features, ``res*res x d``) and keys (tokens, ``N x d``)."""

    token_vectors: np.ndarray
    feature_vectors: np.ndarray

    @property
    def dim(self) -> int:
        return int(np.asarray(self.token_vectors).shape[1])


def box_mask(box, res: int = MAP_RES) -> np.ndarray:
    """Cells whose centre lies inside the (closed) normalized box."""
    x0, y0, x1, y1 = box
    c = (np.arange(res) + 0.5) / res
    cols = (c >= x0) & (c <= x1)
    rows = (c >= y0) & (c <= y1)
    return (rows[:, None] & cols[None, :]).astype(np.float64)


def boxes_to_masks(layout: LayoutAnnotation, res: int = MAP_RES) -> MaskSet:
    out = {}
    for comp in layout.components:
        m = box_mask(comp.box, res)
        if not m.any():
            raise DegeneracyError(f"box for component {comp.label!r} covers no mask cell centre")
        out[comp.label] = m
    return MaskSet(out)


def cross_attention(inputs: AttentionInputs, exclude_sot: bool = True) -> ResponseMaps:
    """Softmax over tokens of ``q.k / sqrt(d)`` per spatial location.

    With ``exclude_sot`` the start-of-text token (row 0) is dropped before the
    softmax; returned maps stay keyed by original token index.
    """
    k = np.asarray(inputs.token_vectors, dtype=np.float64)
    q = np.asarray(inputs.feature_vectors, dtype=np.float64)
    if k.ndim != 2 or q.ndim != 2 or k.shape[1] != q.shape[1]:
        raise ArgumentError("token and feature vectors must share dimension d")
    d = k.shape[1]
    if d == 0:
        raise ArgumentError("attention dimension d must be >= 1")
    res = int(round(np.sqrt(len(q))))
    if res * res != len(q):
        raise ArgumentError(f"feature count {len(q)} is not a square grid")
    first = 1 if exclude_sot else 0
    if len(k) - first < 1:
        raise ArgumentError("need at least one token after start-of-text exclusion")
    logits = q @ k[first:].T / np.sqrt(d)
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    maps = {first + t: w[:, t].reshape(res, res) for t in range(w.shape[1])}
    return ResponseMaps(maps, source="attention")


def smooth_maps(maps: ResponseMaps, sigma: float = DEFAULT_MAP_SIGMA) -> ResponseMaps:
    if sigma < 0:
        raise ArgumentError(f"sigma must be >= 0, got {sigma}")
    return ResponseMaps({k: blur_array(v, sigma) for k, v in maps.maps.items()}, maps.source)


def topk_mean(values: np.ndarray, mask: np.ndarray, p: int) -> float:
    """Mean of the ``p`` largest entries of ``values * mask`` (ties: lower flat index first)."""
    prod = (np.asarray(values, dtype=np.float64) * np.asarray(mask, dtype=np.float64)).ravel()
    if not 1 <= p <= prod.size:
        raise ArgumentError(f"Top-k count must lie in [1, {prod.size}], got {p}")
    order = np.argsort(-prod, kind="stable")[:p]
    return float(prod[order].sum() / p)


def region_losses(response: np.ndarray, mask: np.ndarray, p: int) -> tuple[float, float]:
    """Inside-region and outside-region losses for one component."""
    a = np.minimum(np.asarray(response, dtype=np.float64), 1.0)
    m = np.asarray(mask, dtype=np.float64)
    return 1.0 - topk_mean(a, m, p), topk_mean(a, 1.0 - m, p)


@dataclass(frozen=True)
class GsResult:
    total: float
    inside: float
    outside: float
    breakdown: dict[str, tuple[float, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "total": self.total, "inside": self.inside, "outside": self.outside,
            "components": {k: {"inside": v[0], "outside": v[1]} for k, v in self.breakdown.items()},
        }


def gs_loss(maps: ResponseMaps, masks: MaskSet, component_tokens: dict | None = None,
            p: int = DEFAULT_TOPK) -> GsResult:
    """Sum of inside- and outside-region losses over all components.

    ``component_tokens`` maps labels to response-map keys; by default each
    label is its own key.
    """
    tokens = component_tokens or {label: label for label in masks.masks}
    breakdown = {}
    for label, mask in masks.masks.items():
        if label not in tokens:
            raise ConfigError(f"component {label!r} has no token mapping")
        key = tokens[label]
        if key not in maps.maps:
            raise ConfigError(f"component {label!r} maps to token {key!r} with no response map")
        breakdown[label] = region_losses(maps.maps[key], mask, p)
    inside = float(sum(v[0] for v in breakdown.values()))
    outside = float(sum(v[1] for v in breakdown.values()))
    return GsResult(inside + outside, inside, outside, breakdown)


def coverage_response_maps(component_rasters: dict[str, GrayImage], res: int = MAP_RES) -> ResponseMaps:
    shapes = {img.values.shape for img in component_rasters.values()}
    if len(shapes) > 1:
        raise ArgumentError(f"component rasters differ in size: {sorted(shapes)}")
    maps = {k: downsample_array(img.values, res) for k, img in component_rasters.items()}
    return ResponseMaps(maps, source="coverage")


def load_response_maps(path: str | Path, res: int = MAP_RES) -> ResponseMaps:
    """External maps: JSON object ``{label: [[row of res decimals], ...]}``."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"{path}: cannot read file ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise ParseError(f"{path}: expected an object keyed by label")
    maps = {}
    for label, rows in data.items():
        try:
            arr = np.array(rows, dtype=np.float64)
        except (TypeError, ValueError):
            raise ParseError(f"{path}: map {label!r} is not a numeric grid") from None
        if arr.shape != (res, res):
            raise ParseError(f"{path}: map {label!r} has shape {arr.shape}, expected {(res, res)}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ParseError(f"{path}: map {label!r} must be finite and nonnegative")
        maps[label] = arr
    return ResponseMaps(maps, source="external")
