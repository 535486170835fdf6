import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sctr.errors import NumericalError
from sctr.tensor import (fold, frobenius_norm, mode_n_product, nuclear_norm, svd, svt,
                         tucker_compose, unfold)

from oracles import frobenius_loops, mode_product_loops, tucker_loops

dims = st.integers(1, 7)
shapes3 = st.tuples(dims, st.integers(1, 6), st.integers(1, 5))
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def tensors(shape_strategy=shapes3):
    return shape_strategy.flatmap(lambda s: arrays(np.float64, s, elements=finite))


def test_frobenius_examples():
    assert frobenius_norm(np.zeros((2, 2, 2))) == 0.0
    t = np.zeros((2, 2, 2))
    t[1, 0, 1] = 3.0
    assert frobenius_norm(t) == 3.0
    r = np.random.default_rng(0).normal(size=(4, 3, 2))
    assert abs(frobenius_norm(r) - frobenius_loops(r)) / frobenius_loops(r) < 1e-12


@given(tensors(), st.floats(-5, 5, allow_nan=False))
def test_frobenius_homogeneous(t, c):
    assert np.isclose(frobenius_norm(c * t), abs(c) * frobenius_norm(t), rtol=1e-9, atol=1e-9)


def test_unfold_2x2x2_mode1_column_order():
    t = np.arange(8.0).reshape(2, 2, 2)
    m = unfold(t, 1)
    assert m.shape == (2, 4)
    for i in range(2):
        # Column j + 2k holds t[i, j, k].
        assert list(m[i]) == [t[i, 0, 0], t[i, 1, 0], t[i, 0, 1], t[i, 1, 1]]


def test_fold_unfold_identity_every_mode():
    t = np.random.default_rng(1).normal(size=(3, 4, 5))
    for mode in (1, 2, 3):
        assert np.array_equal(fold(unfold(t, mode), mode, t.shape), t)


def test_fold_unfold_exhaustive_small_shapes():
    for a in range(1, 8):
        for b in range(1, 7):
            for c in range(1, 6):
                t = np.arange(a * b * c, dtype=float).reshape(a, b, c)
                for mode in (1, 2, 3):
                    assert np.array_equal(fold(unfold(t, mode), mode, t.shape), t)


@given(tensors(), st.sampled_from([1, 2, 3]))
def test_fold_inverts_unfold(t, mode):
    m = unfold(t, mode)
    assert m.shape == (t.shape[mode - 1], t.size // t.shape[mode - 1])
    assert np.array_equal(fold(m, mode, t.shape), t)


def test_rank_one_unfoldings():
    rng = np.random.default_rng(2)
    t = np.einsum("i,j,k->ijk", rng.normal(size=5), rng.normal(size=4), rng.normal(size=3))
    for mode in (1, 2, 3):
        s = np.linalg.svd(unfold(t, mode), compute_uv=False)
        assert np.sum(s > 1e-10 * s[0]) == 1


def test_unfold_rejects_bad_mode():
    with pytest.raises(ValueError):
        unfold(np.zeros((2, 2, 2)), 4)


def test_mode_product_examples():
    rng = np.random.default_rng(3)
    t = rng.normal(size=(3, 4, 2))
    assert np.array_equal(mode_n_product(t, np.eye(3), 1), t)
    assert np.array_equal(mode_n_product(t, 2 * np.eye(3), 1), 2 * t)
    t = rng.normal(size=(3, 3, 3))
    m = rng.normal(size=(2, 3))
    assert np.max(np.abs(mode_n_product(t, m, 2) - mode_product_loops(t, m, 2))) < 1e-12


def test_mode_product_shape_mismatch():
    with pytest.raises(ValueError):
        mode_n_product(np.zeros((3, 4, 5)), np.zeros((2, 5)), 1)


@settings(max_examples=50)
@given(tensors(st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))),
       st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**31))
def test_mode_product_associative_same_mode(t, p, q, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(p, t.shape[0]))
    b = rng.normal(size=(q, p))
    lhs = mode_n_product(mode_n_product(t, a, 1), b, 1)
    rhs = mode_n_product(t, b @ a, 1)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


@settings(max_examples=50)
@given(tensors(st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))),
       st.integers(0, 2**31))
def test_mode_products_commute_across_modes(t, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(2, t.shape[0]))
    c = rng.normal(size=(3, t.shape[2]))
    lhs = mode_n_product(mode_n_product(t, a, 1), c, 3)
    rhs = mode_n_product(mode_n_product(t, c, 3), a, 1)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_tucker_examples():
    rng = np.random.default_rng(4)
    u, v, w = rng.normal(size=(5, 2)), rng.normal(size=(4, 3)), rng.normal(size=(6, 2))
    assert not np.any(tucker_compose(np.zeros((2, 3, 2)), u, v, w))
    a, b, c = rng.normal(size=(5, 1)), rng.normal(size=(4, 1)), rng.normal(size=(3, 1))
    assert np.allclose(tucker_compose(np.ones((1, 1, 1)), a, b, c),
                       np.einsum("i,j,k->ijk", a[:, 0], b[:, 0], c[:, 0]), atol=1e-14)
    core = rng.normal(size=(2, 3, 2))
    assert np.max(np.abs(tucker_compose(core, u, v, w) - tucker_loops(core, u, v, w))) < 1e-10


def test_svd_examples():
    u, s, vt = svd(np.diag([3.0, 1.0]))
    assert np.allclose(s, [3.0, 1.0])
    assert not np.any(svd(np.zeros((3, 2)))[1])
    m = np.random.default_rng(5).normal(size=(8, 5))
    u, s, vt = svd(m)
    assert np.linalg.norm(u @ np.diag(s) @ vt - m) / np.linalg.norm(m) < 1e-8


def test_svd_non_finite_input_rejected():
    with pytest.raises(ValueError):
        svd(np.array([[1.0, np.nan], [0.0, 1.0]]))


def test_svd_non_convergence_is_numeric_error(monkeypatch):
    import scipy.linalg

    def fail(*args, **kwargs):
        raise np.linalg.LinAlgError("did not converge")

    monkeypatch.setattr(scipy.linalg, "svd", fail)
    with pytest.raises(NumericalError) as exc:
        svd(np.eye(3))
    assert exc.value.iteration == 2


def test_svt_examples():
    assert np.allclose(svt(np.diag([3.0, 1.0]), 2.0), np.diag([1.0, 0.0]))
    m = np.random.default_rng(6).normal(size=(6, 4))
    assert np.allclose(svt(m, 0.0), m, atol=1e-10)
    s = np.linalg.svd(m, compute_uv=False)
    out = svt(m, s[0])
    assert abs(nuclear_norm(out) - np.sum(np.maximum(s - s[0], 0))) < 1e-10


@settings(max_examples=50)
@given(st.integers(1, 6), st.integers(1, 6), st.floats(0, 5), st.integers(0, 2**31))
def test_svt_is_contraction(r, c, tau, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(r, c)), rng.normal(size=(r, c))
    # Proximal operators are firmly nonexpansive.
    assert np.linalg.norm(svt(a, tau) - svt(b, tau)) <= np.linalg.norm(a - b) + 1e-9
    assert nuclear_norm(svt(a, tau)) <= nuclear_norm(a) + 1e-12
    sa = np.linalg.svd(a, compute_uv=False)
    assert np.allclose(np.sort(np.linalg.svd(svt(a, tau), compute_uv=False))[::-1],
                       np.maximum(sa - tau, 0), atol=1e-9)
