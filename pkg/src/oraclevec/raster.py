"""Raster primitives: binary/gray planes, PGM/PBM I/O, blur and block downsampling.

Images are row-major ``(height, width)`` float64 or uint8 arrays wrapped in
small immutable dataclasses. Arrays are made read-only on construction.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ArgumentError, ParseError


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Bitmap:
    """Binary raster, foreground (ink) = 1."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ArgumentError(f"bitmap must be a non-empty 2D array, got shape {px.shape}")
        object.__setattr__(self, "pixels", _freeze((px != 0).astype(np.uint8)))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Bitmap) and np.array_equal(self.pixels, other.pixels)

    def count(self) -> int:
        return int(self.pixels.sum())


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Scalar raster with values in [0, 1].

    ``source_format`` records the PNM magic number when loaded from disk
    (``"P1"`` ... ``"P5"``); PBM values are ink-valued, PGM values are intensities.
    """

    values: np.ndarray
    source_format: str = ""

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ArgumentError(f"image must be a non-empty 2D array, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
            raise ArgumentError("image values must lie in [0, 1]")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GrayImage) and np.array_equal(self.values, other.values)


# --------------------------------------------------------------------------
# PNM I/O

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _header_ints(data: bytes, count: int, pos: int) -> tuple[list[int], int]:
    """``count`` positive header integers starting at ``pos``, and the offset after them."""
    values = []
    for _ in range(count):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ParseError(f"malformed header: expected a number at byte offset {pos}")
        tok, start = m.group(1), m.start(1)
        try:
            val = int(tok)
        except ValueError:
            raise ParseError(f"malformed header: non-integer {tok!r} at byte offset {start}") from None
        if val < 1:
            raise ParseError(f"malformed header: value {val} must be positive at byte offset {start}")
        values.append(val)
        pos = m.end()
    return values, pos


def parse_pnm(data: bytes) -> GrayImage:
    """Decode P1/P2/P4/P5 bytes into a GrayImage."""
    if len(data) < 2 or data[:1] != b"P" or data[1:2] not in b"1245":
        raise ParseError("malformed header: unsupported magic number at byte offset 0")
    magic = data[:2].decode()
    pos = 2
    is_bitmap = magic in ("P1", "P4")
    (width, height), pos = _header_ints(data, 2, pos)
    maxval = 1
    if not is_bitmap:
        (maxval,), pos = _header_ints(data, 1, pos)
        if maxval > 65535:
            raise ParseError(f"malformed header: maxval {maxval} > 65535 near byte offset {pos}")
    n = width * height

    if magic in ("P1", "P2"):
        if magic == "P1":
            # PBM plain format allows digits without separating whitespace.
            body = re.sub(rb"#[^\n]*", b"", data[pos:])
            digits = re.findall(rb"[01]", body)
            if len(digits) < n:
                raise ParseError(f"truncated payload: expected {n} samples, found {len(digits)} "
                                 f"(payload starts at byte offset {pos})")
            raw = np.array([d == b"1" for d in digits[:n]], dtype=np.float64)
        else:
            toks = re.sub(rb"#[^\n]*", b"", data[pos:]).split()
            if len(toks) < n:
                raise ParseError(f"truncated payload: expected {n} samples, found {len(toks)} "
                                 f"(payload starts at byte offset {pos})")
            try:
                raw = np.array([int(t) for t in toks[:n]], dtype=np.float64)
            except ValueError:
                raise ParseError(f"malformed payload: non-integer sample after byte offset {pos}") from None
            if raw.max(initial=0) > maxval:
                raise ParseError(f"malformed payload: sample exceeds maxval after byte offset {pos}")
            raw = raw / maxval
    else:
        pos += 1  # single whitespace byte after the header
        if magic == "P4":
            row_bytes = (width + 7) // 8
            need = row_bytes * height
            if len(data) - pos < need:
                raise ParseError(f"truncated payload: need {need} bytes from byte offset {pos}, "
                                 f"have {len(data) - pos}")
            packed = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos).reshape(height, row_bytes)
            raw = np.unpackbits(packed, axis=1)[:, :width].astype(np.float64).ravel()
        else:
            bpp = 1 if maxval < 256 else 2
            need = n * bpp
            if len(data) - pos < need:
                raise ParseError(f"truncated payload: need {need} bytes from byte offset {pos}, "
                                 f"have {len(data) - pos}")
            dtype = np.uint8 if bpp == 1 else np.dtype(">u2")
            raw = np.frombuffer(data, dtype=dtype, count=n, offset=pos).astype(np.float64)
            if raw.max(initial=0) > maxval:
                raise ParseError(f"malformed payload: sample exceeds maxval after byte offset {pos}")
            raw = raw / maxval
    return GrayImage(np.clip(raw.reshape(height, width), 0.0, 1.0), source_format=magic)


def load_pgm(path: str | Path) -> GrayImage:
    """Read a PGM (P2/P5) or PBM (P1/P4) file, values normalized to [0, 1]."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ParseError(f"{path}: cannot read file ({exc.strerror})") from None
    try:
        return parse_pnm(data)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from None


def encode_pgm(img: GrayImage) -> bytes:
    q = np.rint(img.values * 255.0).astype(np.uint8)
    return f"P5\n{img.width} {img.height}\n255\n".encode() + q.tobytes()


def save_pgm(img: GrayImage, path: str | Path) -> None:
    """Write a binary P5 PGM with maxval 255."""
    Path(path).write_bytes(encode_pgm(img))


def save_pbm(bmp: Bitmap, path: str | Path) -> None:
    """Write a binary P4 PBM (1 = black = foreground)."""
    packed = np.packbits(bmp.pixels, axis=1)
    Path(path).write_bytes(f"P4\n{bmp.width} {bmp.height}\n".encode() + packed.tobytes())


def ink_image(img: GrayImage, invert: bool = False) -> GrayImage:
    """Return an ink-valued image (dark strokes -> 1).

    PBM input is already ink-valued; PGM intensities are flipped. ``invert``
    handles light-on-dark scans.
    """
    ink = img.values if img.source_format in ("P1", "P4") else 1.0 - img.values
    if invert:
        ink = 1.0 - ink
    return GrayImage(ink)


# --------------------------------------------------------------------------
# Pixel operations

def otsu_threshold(img: GrayImage, bins: int = 256) -> float:
    """Otsu threshold in (0, 1); 0.5 when the image is constant."""
    hist, edges = np.histogram(img.values, bins=bins, range=(0.0, 1.0))
    centers = 0.5 * (edges[:-1] + edges[1:])
    w0 = np.cumsum(hist)
    w1 = w0[-1] - w0
    m0 = np.cumsum(hist * centers)
    valid = (w0 > 0) & (w1 > 0)
    if not valid.any():
        return 0.5
    mu0 = np.where(valid, m0 / np.maximum(w0, 1), 0.0)
    mu1 = np.where(valid, (m0[-1] - m0) / np.maximum(w1, 1), 0.0)
    between = np.where(valid, w0 * w1 * (mu0 - mu1) ** 2, -1.0)
    t = float(edges[int(np.argmax(between)) + 1])
    return min(max(t, 1e-6), 1 - 1e-6)


def binarize(img: GrayImage, threshold: float = 0.5) -> Bitmap:
    if not 0.0 < threshold < 1.0:
        raise ArgumentError(f"threshold must lie in (0, 1), got {threshold}")
    return Bitmap(img.values >= threshold)


@lru_cache(maxsize=64)
def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled 1D Gaussian truncated at ceil(3 sigma), normalized to sum 1."""
    radius = max(1, math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    with np.errstate(over="ignore"):
        k = np.exp(-0.5 * (x / sigma) ** 2)
    k /= k.sum()
    k.setflags(write=False)
    return k


@lru_cache(maxsize=64)
def _edge_norms(sigma: float, n: int) -> np.ndarray:
    k = gaussian_kernel(sigma)
    norm = correlate1d(np.ones(n), k, mode="constant", cval=0.0)
    norm.setflags(write=False)
    return norm


def blur_array(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with in-bounds kernel renormalization."""
    if sigma < 0:
        raise ArgumentError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return np.array(arr, dtype=np.float64, copy=True)
    k = gaussian_kernel(float(sigma))
    h, w = arr.shape
    out = correlate1d(np.asarray(arr, dtype=np.float64), k, axis=0, mode="constant", cval=0.0)
    out /= _edge_norms(float(sigma), h)[:, None]
    out = correlate1d(out, k, axis=1, mode="constant", cval=0.0)
    out /= _edge_norms(float(sigma), w)[None, :]
    return out


def gaussian_blur(img: GrayImage, sigma: float) -> GrayImage:
    if sigma < 0:
        raise ArgumentError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return img
    return GrayImage(np.clip(blur_array(img.values, sigma), 0.0, 1.0))


@lru_cache(maxsize=64)
def _area_weights(n: int, res: int) -> np.ndarray:
    """(res, n) matrix: fraction of each source cell covered by each output cell."""
    scale = n / res
    lo = np.arange(res)[:, None] * scale
    hi = lo + scale
    src = np.arange(n)[None, :]
    overlap = np.clip(np.minimum(hi, src + 1) - np.maximum(lo, src), 0.0, None)
    wts = overlap / scale
    wts.setflags(write=False)
    return wts


def downsample_array(arr: np.ndarray, res: int) -> np.ndarray:
    if res < 1:
        raise ArgumentError(f"res must be >= 1, got {res}")
    h, w = arr.shape
    if h % res == 0 and w % res == 0:
        return arr.reshape(res, h // res, res, w // res).mean(axis=(1, 3))
    return _area_weights(h, res) @ arr @ _area_weights(w, res).T


def downsample_mean(img: GrayImage, res: int) -> GrayImage:
    """Mean-pool to ``res x res`` cells, with fractional-area weights when not divisible."""
    return GrayImage(np.clip(downsample_array(img.values, res), 0.0, 1.0))
