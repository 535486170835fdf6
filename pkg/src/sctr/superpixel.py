"""SLIC superpixels and the rectangular patches built from them.

A superpixel's pixel set is usually irregular, but a Tucker factorization
needs a box. Each label therefore becomes the tight bounding box of its
pixels (all of axis 3 included) plus a membership mask saying which pixels of
the box the label owns. Boxes of neighbouring labels may overlap; membership
masks never do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .tensor import as_tensor3, svd, unfold

MIN_SEGMENT_PIXELS = 16
_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class RankPolicy:
    energy: float = 0.99
    r_max: int = 16
    fixed: tuple[int, int, int] | None = None


@dataclass
class PatchSpec:
    label: int
    bbox: tuple[int, int, int, int]  # row0, row1, col0, col1, half-open
    membership: np.ndarray
    dims: tuple[int, int, int]
    ranks: tuple[int, int, int]

    @property
    def pixel_count(self) -> int:
        return int(self.membership.sum())


@dataclass
class Patch:
    """A PatchSpec with its crops of the data, mask and guide."""

    spec: PatchSpec
    data: np.ndarray
    mask: np.ndarray
    guide: np.ndarray = field(repr=False)

    @property
    def label(self) -> int:
        return self.spec.label


# --------------------------------------------------------------------- SLIC


def _as_channels(feature) -> np.ndarray:
    f = np.asarray(feature, dtype=np.float64)
    if f.ndim == 2:
        f = f[:, :, None]
    if f.ndim != 3:
        raise ValueError(f"feature image must be 2D or 3D, got shape {f.shape}")
    return f


def _grid_shape(h: int, w: int, k: int) -> tuple[int, int]:
    step = math.sqrt(h * w / k)
    ny = min(h, max(1, round(h / step)))
    nx = min(w, max(1, round(k / ny)))
    return ny, nx


def _gradient_magnitude(f: np.ndarray) -> np.ndarray:
    p = np.pad(f, ((1, 1), (1, 1), (0, 0)), mode="edge")
    dy = p[2:, 1:-1] - p[:-2, 1:-1]
    dx = p[1:-1, 2:] - p[1:-1, :-2]
    return np.sum(dy * dy + dx * dx, axis=2)


def _initial_centers(f: np.ndarray, k: int) -> np.ndarray:
    h, w, _ = f.shape
    ny, nx = _grid_shape(h, w, k)
    grad = _gradient_magnitude(f)
    centers = []
    for i in range(ny):
        for j in range(nx):
            cy = int((i + 0.5) * h / ny)
            cx = int((j + 0.5) * w / nx)
            y0, y1 = max(cy - 1, 0), min(cy + 2, h)
            x0, x1 = max(cx - 1, 0), min(cx + 2, w)
            win = grad[y0:y1, x0:x1]
            dy, dx = np.unravel_index(np.argmin(win), win.shape)
            y, x = y0 + dy, x0 + dx
            centers.append(np.concatenate([f[y, x], [y, x]]))
    return np.asarray(centers)


def _assign(f, centers, step, compactness):
    h, w, c = f.shape
    labels = np.full((h, w), -1, dtype=np.int64)
    best = np.full((h, w), np.inf)
    scale = (compactness / step) ** 2
    s = int(math.ceil(step))
    for idx, ctr in enumerate(centers):
        cy, cx = int(round(ctr[c])), int(round(ctr[c + 1]))
        y0, y1 = max(cy - s, 0), min(cy + s + 1, h)
        x0, x1 = max(cx - s, 0), min(cx + s + 1, w)
        win = f[y0:y1, x0:x1]
        dc = np.sum((win - ctr[:c]) ** 2, axis=2)
        yy, xx = np.mgrid[y0:y1, x0:x1]
        ds = (yy - ctr[c]) ** 2 + (xx - ctr[c + 1]) ** 2
        d = dc + ds * scale
        sub_best = best[y0:y1, x0:x1]
        better = d < sub_best
        sub_best[better] = d[better]
        labels[y0:y1, x0:x1][better] = idx
    orphan = labels < 0
    if orphan.any():
        ys, xs = np.nonzero(orphan)
        px = f[ys, xs]
        dc = ((px[:, None, :] - centers[None, :, :c]) ** 2).sum(axis=2)
        ds = (ys[:, None] - centers[None, :, c]) ** 2 + (xs[:, None] - centers[None, :, c + 1]) ** 2
        labels[ys, xs] = np.argmin(dc + ds * scale, axis=1)
    return labels


def _update_centers(f, labels, centers):
    h, w, c = f.shape
    k = len(centers)
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=k).astype(np.float64)
    yy, xx = np.mgrid[0:h, 0:w]
    feats = np.concatenate([f.reshape(-1, c), yy.reshape(-1, 1), xx.reshape(-1, 1)], axis=1)
    sums = np.zeros((k, c + 2))
    np.add.at(sums, flat, feats)
    new = centers.copy()
    nz = counts > 0
    new[nz] = sums[nz] / counts[nz, None]
    return new


def _components(labels: np.ndarray):
    """Split every label into 4-connected components.

    Returns the component map and, per component, its size and whether it is
    the largest component of its label.
    """
    comp = np.full(labels.shape, -1, dtype=np.int64)
    sizes: list[int] = []
    primary: list[bool] = []
    for lab in np.unique(labels):
        cc, n = ndimage.label(labels == lab, structure=_FOUR_CONNECTED)
        if n == 0:
            continue
        sz = np.bincount(cc.ravel(), minlength=n + 1)[1:]
        keep = int(np.argmax(sz))
        base = len(sizes)
        sel = cc > 0
        comp[sel] = cc[sel] - 1 + base
        sizes.extend(int(s) for s in sz)
        primary.extend(i == keep for i in range(n))
    return comp, np.asarray(sizes), np.asarray(primary)


def _adjacency(comp: np.ndarray, n: int) -> list[set[int]]:
    nbrs: list[set[int]] = [set() for _ in range(n)]
    for a, b in ((comp[:, 1:], comp[:, :-1]), (comp[1:, :], comp[:-1, :])):
        diff = a != b
        for u, v in set(zip(a[diff].tolist(), b[diff].tolist())):
            nbrs[u].add(v)
            nbrs[v].add(u)
    return nbrs


def enforce_connectivity(labels, min_size: int = MIN_SEGMENT_PIXELS) -> np.ndarray:
    """Make every label a single 4-connected region of at least ``min_size`` pixels.

    Stray components of a label and undersized regions are absorbed, smallest
    first, into their largest adjacent region. Labels are renumbered
    0..K-1 in raster order of first appearance.
    """
    labels = np.asarray(labels)
    comp, sizes, primary = _components(labels)
    n = len(sizes)
    nbrs = _adjacency(comp, n)
    sizes = sizes.astype(np.int64).copy()
    alive = np.ones(n, dtype=bool)
    owner = np.arange(n)

    def needs_merge(i):
        return not primary[i] or sizes[i] < min_size

    while alive.sum() > 1:
        cands = [i for i in np.flatnonzero(alive) if needs_merge(i) and nbrs[i]]
        if not cands:
            break
        i = min(cands, key=lambda j: (sizes[j], j))
        j = max(nbrs[i], key=lambda t: (sizes[t], -t))
        owner[owner == i] = j
        sizes[j] += sizes[i]
        alive[i] = False
        for t in nbrs[i]:
            nbrs[t].discard(i)
            if t != j:
                nbrs[t].add(j)
                nbrs[j].add(t)
        nbrs[i] = set()
    merged = owner[comp]
    _, first = np.unique(merged.ravel(), return_index=True)
    order = np.unique(merged.ravel())[np.argsort(first)]
    remap = np.empty(merged.max() + 1, dtype=np.int64)
    remap[order] = np.arange(len(order))
    return remap[merged]


def slic_segment(
    feature,
    k_target: int,
    compactness: float = 10.0,
    max_iters: int = 10,
    seed: int = 0,
    min_size: int = MIN_SEGMENT_PIXELS,
) -> np.ndarray:
    """SLIC superpixels of a 2D (or multi-channel) feature image.

    Returns an integer label map of shape (H, W) whose labels 0..K-1 are
    each one 4-connected region. Initialization is a deterministic grid, so
    ``seed`` does not change the result; it is accepted so that callers can
    pass a run seed uniformly.
    """
    del seed
    f = _as_channels(feature)
    h, w, _ = f.shape
    if not 1 <= k_target <= h * w:
        raise ValueError(f"k_target must be in [1, {h * w}], got {k_target}")
    if compactness <= 0:
        raise ValueError("compactness must be positive")
    step = math.sqrt(h * w / k_target)
    centers = _initial_centers(f, k_target)
    labels = None
    for _ in range(max(1, max_iters)):
        new = _assign(f, centers, step, compactness)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = _update_centers(f, labels, centers)
    return enforce_connectivity(labels, min_size=min_size)


# ------------------------------------------------------------------ patches


def estimate_patch_ranks(guide_patch, energy: float = 0.99, r_max: int = 16) -> tuple[int, int, int]:
    """Smallest per-mode ranks keeping ``energy`` of the squared spectrum."""
    g = as_tensor3(guide_patch, dtype=np.float64)
    if not 0 < energy <= 1:
        raise ValueError(f"energy must be in (0, 1], got {energy}")
    ranks = []
    for mode in (1, 2, 3):
        s2 = svd(unfold(g, mode))[1] ** 2
        total = s2.sum()
        if total <= 0:
            r = 1
        else:
            frac = np.cumsum(s2) / total
            r = int(np.searchsorted(frac, energy * (1 - 1e-12))) + 1
        ranks.append(max(1, min(r, g.shape[mode - 1], r_max)))
    return tuple(ranks)


def extract_patches(labels, data, mask, guide, rank_policy: RankPolicy = RankPolicy()) -> list[Patch]:
    labels = np.asarray(labels)
    data = as_tensor3(data)
    mask = np.asarray(mask, dtype=bool)
    guide = as_tensor3(guide)
    if labels.shape != data.shape[:2]:
        raise ValueError(f"label map {labels.shape} does not match spatial shape {data.shape[:2]}")
    patches = []
    for lab in np.unique(labels):
        member = labels == lab
        rows = np.flatnonzero(member.any(axis=1))
        cols = np.flatnonzero(member.any(axis=0))
        r0, r1, c0, c1 = int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1
        dims = (r1 - r0, c1 - c0, data.shape[2])
        g = guide[r0:r1, c0:c1]
        if rank_policy.fixed is not None:
            ranks = tuple(max(1, min(int(r), d)) for r, d in zip(rank_policy.fixed, dims))
        else:
            ranks = estimate_patch_ranks(g, rank_policy.energy, rank_policy.r_max)
            ranks = tuple(min(r, d) for r, d in zip(ranks, dims))
        spec = PatchSpec(int(lab), (r0, r1, c0, c1), member[r0:r1, c0:c1].copy(), dims, ranks)
        patches.append(Patch(spec, data[r0:r1, c0:c1], mask[r0:r1, c0:c1], g))
    return patches


def single_patch(data, mask, guide, rank_policy: RankPolicy = RankPolicy()) -> list[Patch]:
    """The whole tensor as one patch (the no-superpixel ablation)."""
    data = as_tensor3(data)
    return extract_patches(np.zeros(data.shape[:2], dtype=np.int64), data, mask, guide, rank_policy)


def is_valid_partition(labels) -> bool:
    """Every label present forms one 4-connected region."""
    labels = np.asarray(labels)
    for lab in np.unique(labels):
        _, n = ndimage.label(labels == lab, structure=_FOUR_CONNECTED)
        if n != 1:
            return False
    return True
