from __future__ import annotations

import logging

import numpy as np
import pytest

from oraclevec.raster import Bitmap


def random_blob(rng: np.random.Generator, size: int = 64, n_shapes: int = 4) -> Bitmap:
    """Union of random filled ellipses and thick segments."""
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    img = np.zeros((size, size), dtype=bool)
    for _ in range(n_shapes):
        cx, cy = rng.uniform(0.15, 0.85, 2) * size
        if rng.random() < 0.5:
            a, b = rng.uniform(0.04, 0.2, 2) * size
            t = rng.uniform(0, np.pi)
            dx, dy = xx - cx, yy - cy
            u = dx * np.cos(t) + dy * np.sin(t)
            v = -dx * np.sin(t) + dy * np.cos(t)
            img |= (u / a) ** 2 + (v / b) ** 2 <= 1.0
        else:
            ex, ey = rng.uniform(0.1, 0.9, 2) * size
            w = rng.uniform(0.02, 0.06) * size
            d = np.array([ex - cx, ey - cy])
            L2 = max(float(d @ d), 1e-9)
            t = np.clip(((xx - cx) * d[0] + (yy - cy) * d[1]) / L2, 0, 1)
            img |= np.hypot(xx - cx - t * d[0], yy - cy - t * d[1]) <= w
    img[0, :] = img[-1, :] = img[:, 0] = img[:, -1] = False
    return Bitmap(img.astype(np.uint8))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _restore_package_log_level():
    # the CLI sets the package logger level; keep that from leaking into caplog-based tests
    logger = logging.getLogger("oraclevec")
    level = logger.level
    yield
    logger.setLevel(level)
