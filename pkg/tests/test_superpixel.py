import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sctr.superpixel import (RankPolicy, enforce_connectivity, estimate_patch_ranks, extract_patches,
                             is_valid_partition, single_patch, slic_segment)
from sctr.synthetic import quadrant_image

from oracles import energy_rank, flood_fill_ok


def _tensorize(img, bands=2):
    return np.repeat(img[:, :, None], bands, axis=2)


def test_constant_image_single_label():
    labels = slic_segment(np.full((20, 24), 0.5), 1)
    assert labels.shape == (20, 24)
    assert np.all(labels == 0)


def test_quadrants_recovered():
    img = quadrant_image(64) * 100
    labels = slic_segment(img, 4, compactness=10)
    h = 32
    for rs in (slice(0, h), slice(h, 64)):
        for cs in (slice(0, h), slice(h, 64)):
            block = labels[rs, cs]
            agree = np.bincount(block.ravel()).max() / block.size
            assert agree >= 0.95


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.integers(16, 40), st.integers(16, 40), st.integers(1, 12),
       st.floats(1.0, 40.0))
def test_slic_output_is_valid_partition(seed, h, w, k, m):
    img = np.random.default_rng(seed).uniform(0, 100, size=(h, w))
    labels = slic_segment(img, k, compactness=m)
    assert labels.shape == (h, w)
    assert flood_fill_ok(labels)
    assert is_valid_partition(labels)
    assert set(np.unique(labels)) == set(range(labels.max() + 1))


def test_slic_deterministic():
    img = np.random.default_rng(1).uniform(0, 100, size=(40, 40, 3))
    a = slic_segment(img, 16, seed=3)
    b = slic_segment(img, 16, seed=3)
    assert np.array_equal(a, b)


def test_slic_rejects_bad_k():
    with pytest.raises(ValueError):
        slic_segment(np.zeros((4, 4)), 0)
    with pytest.raises(ValueError):
        slic_segment(np.zeros((4, 4)), 17)


def test_enforce_connectivity_merges_orphans():
    labels = np.zeros((10, 10), int)
    labels[:, 5:] = 1
    labels[0, 0] = 1  # stray piece of label 1
    out = enforce_connectivity(labels, min_size=1)
    assert flood_fill_ok(out)
    assert out[0, 0] == out[5, 0]
    small = enforce_connectivity(np.where(np.arange(100).reshape(10, 10) == 0, 1, 0), min_size=16)
    assert np.all(small == 0)


def test_single_label_patch_covers_image():
    data = np.random.default_rng(2).uniform(size=(6, 7, 3))
    patches = single_patch(data, np.ones(data.shape, bool), data)
    assert len(patches) == 1
    assert patches[0].spec.bbox == (0, 6, 0, 7)
    assert patches[0].spec.dims == (6, 7, 3)


def test_vertical_split_tiles():
    labels = np.zeros((10, 10), int)
    labels[:, 4:] = 1
    data = np.random.default_rng(3).uniform(size=(10, 10, 2))
    p0, p1 = extract_patches(labels, data, np.ones(data.shape, bool), data)
    assert p0.spec.bbox == (0, 10, 0, 4)
    assert p1.spec.bbox == (0, 10, 4, 10)
    assert p0.spec.membership.all() and p1.spec.membership.all()
    assert p0.spec.pixel_count + p1.spec.pixel_count == 100


def test_quadrant_patches_count_pixels():
    img = quadrant_image(64)
    labels = slic_segment(img * 100, 4)
    data = _tensorize(img)
    patches = extract_patches(labels, data, np.ones(data.shape, bool), data)
    assert sum(p.spec.pixel_count for p in patches) == 64 * 64


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 10))
def test_memberships_partition_grid(seed, k):
    rng = np.random.default_rng(seed)
    img = rng.uniform(0, 100, size=(24, 20))
    labels = slic_segment(img, k)
    data = rng.uniform(size=(24, 20, 3))
    cover = np.zeros((24, 20), int)
    for p in extract_patches(labels, data, np.ones(data.shape, bool), data):
        r0, r1, c0, c1 = p.spec.bbox
        cover[r0:r1, c0:c1] += p.spec.membership
        # bbox is tight
        assert p.spec.membership[0].any() and p.spec.membership[-1].any()
        assert p.spec.membership[:, 0].any() and p.spec.membership[:, -1].any()
        assert all(1 <= r <= d for r, d in zip(p.spec.ranks, p.spec.dims))
        assert p.data.shape == p.spec.dims
    assert np.all(cover == 1)


def test_rank_examples():
    rng = np.random.default_rng(4)
    t = np.einsum("i,j,k->ijk", rng.normal(size=6), rng.normal(size=5), rng.normal(size=4))
    assert estimate_patch_ranks(t, 0.99) == (1, 1, 1)
    assert estimate_patch_ranks(np.zeros((4, 4, 3))) == (1, 1, 1)
    r = rng.normal(size=(8, 8, 4))
    assert estimate_patch_ranks(r, 0.99, 16) == tuple(energy_rank(r, m, 0.99, 16) for m in (1, 2, 3))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.integers(1, 16))
def test_rank_monotone_in_energy(seed, e1, e2, r_max):
    t = np.random.default_rng(seed).normal(size=(6, 5, 4))
    lo, hi = sorted((e1, e2))
    a = estimate_patch_ranks(t, lo, r_max)
    b = estimate_patch_ranks(t, hi, r_max)
    assert all(x <= y for x, y in zip(a, b))
    assert all(1 <= x <= min(d, r_max) for x, d in zip(b, t.shape))


def test_fixed_rank_policy_clamps():
    data = np.random.default_rng(5).uniform(size=(3, 8, 2))
    (p,) = single_patch(data, np.ones(data.shape, bool), data, RankPolicy(fixed=(4, 4, 4)))
    assert p.spec.ranks == (3, 4, 2)
