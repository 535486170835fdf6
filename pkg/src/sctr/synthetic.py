"""Desk-scale synthetic tensors.

``piecewise_rank1`` is the workhorse for ablation runs: four quadrant
regions around the centre, each holding its own rank-1 tensor of smooth
factors. The two boundary lines are tilted so the quadrants are not
axis-aligned; with axis-aligned quadrants the whole tensor would have Tucker
rank at most (4, 4, 4) and a single global factorization would already be
exact.
"""

from __future__ import annotations

import numpy as np


def _smooth_profile(rng, n: int, lo: float = 0.35, hi: float = 1.0) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)
    f = rng.uniform(0.5, 1.5)
    phase = rng.uniform(0, 2 * np.pi)
    base = 0.5 + 0.5 * np.sin(2 * np.pi * f * t + phase)
    return lo + (hi - lo) * base


def quadrant_regions(h: int, w: int, tilt: float = 0.25) -> np.ndarray:
    """Region id 0..3 per pixel; the dividing lines have slope ``tilt``."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cy, cx = (h - 1) / 2, (w - 1) / 2
    below = (yy - cy) - tilt * (xx - cx) > 0
    right = (xx - cx) + tilt * (yy - cy) > 0
    return below.astype(np.int64) * 2 + right.astype(np.int64)


def piecewise_rank1(shape=(96, 96, 8), seed: int = 0, tilt: float = 0.25,
                    levels=(0.3, 0.5, 0.7, 0.9)):
    """Return ``(tensor, regions)``; values lie in (0, 1]."""
    h, w, c = shape
    rng = np.random.default_rng(seed)
    regions = quadrant_regions(h, w, tilt)
    out = np.zeros(shape)
    for q in range(4):
        u = _smooth_profile(rng, h)
        v = _smooth_profile(rng, w)
        s = _smooth_profile(rng, c, 0.6, 1.0)
        block = levels[q] * np.einsum("i,j,k->ijk", u, v, s)
        out[regions == q] = block[regions == q]
    return out, regions


def quadrant_image(size: int = 64, levels=(0.1, 0.4, 0.7, 1.0)) -> np.ndarray:
    """Axis-aligned four-level test image of shape (size, size)."""
    half = size // 2
    img = np.empty((size, size))
    img[:half, :half], img[:half, half:] = levels[0], levels[1]
    img[half:, :half], img[half:, half:] = levels[2], levels[3]
    return img


def synthetic_msi(shape=(64, 64, 16), seed: int = 0) -> np.ndarray:
    """A small multispectral-like cube: piecewise rank-1 regions plus mild texture."""
    base, _ = piecewise_rank1(shape, seed=seed)
    rng = np.random.default_rng(seed + 1)
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]] / max(shape[:2])
    texture = 0.03 * np.sin(2 * np.pi * (3 * yy + rng.uniform() * xx))[:, :, None]
    return np.clip(base + texture, 0.0, 1.0)
