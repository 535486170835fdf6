"""Dense 3rd-order tensor algebra.

Tensors are plain ``numpy.ndarray`` objects of shape ``(I1, I2, I3)`` in C
order (axis 3 varies fastest). Modes are numbered 1, 2, 3 as in the usual
tensor notation.

Unfolding convention: ``unfold(t, n)`` has shape ``(I_n, prod of the other
dims)`` and the column index runs over the remaining axes with the
lower-numbered axis varying fastest, i.e. for mode 1 the entry
``t[i, j, k]`` lands in column ``j + k * I2``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import NumericalError

__all__ = [
    "as_tensor3",
    "frobenius_norm",
    "unfold",
    "fold",
    "mode_n_product",
    "tucker_compose",
    "svd",
    "svt",
    "nuclear_norm",
]


def as_tensor3(t, dtype=None) -> np.ndarray:
    arr = np.asarray(t, dtype=dtype)
    if arr.ndim != 3:
        raise ValueError(f"expected a 3rd-order tensor, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"tensor dims must be positive, got {arr.shape}")
    return arr


def _check_mode(mode: int) -> int:
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")
    return mode - 1


def frobenius_norm(t) -> float:
    t = as_tensor3(t)
    return float(np.sqrt(np.sum(np.square(t, dtype=np.float64))))


def unfold(t, mode: int) -> np.ndarray:
    t = as_tensor3(t)
    ax = _check_mode(mode)
    return np.reshape(np.moveaxis(t, ax, 0), (t.shape[ax], -1), order="F")


def fold(m, mode: int, shape) -> np.ndarray:
    """Inverse of :func:`unfold` for a target ``shape``."""
    ax = _check_mode(mode)
    shape = tuple(int(s) for s in shape)
    m = np.asarray(m)
    rest = [s for i, s in enumerate(shape) if i != ax]
    if m.shape != (shape[ax], rest[0] * rest[1]):
        raise ValueError(f"matrix of shape {m.shape} cannot fold into {shape} along mode {mode}")
    t = np.reshape(m, (shape[ax], rest[0], rest[1]), order="F")
    return np.ascontiguousarray(np.moveaxis(t, 0, ax))


def mode_n_product(t, m, mode: int) -> np.ndarray:
    """``t ×_mode m`` for ``m`` of shape ``(J, I_mode)``."""
    t = as_tensor3(t)
    ax = _check_mode(mode)
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[1] != t.shape[ax]:
        raise ValueError(
            f"matrix shape {m.shape} incompatible with mode-{mode} length {t.shape[ax]}"
        )
    # tensordot puts the new axis last; move it back into place.
    out = np.tensordot(t, m, axes=([ax], [1]))
    return np.ascontiguousarray(np.moveaxis(out, -1, ax))


def tucker_compose(core, u, v, w) -> np.ndarray:
    """``core ×1 u ×2 v ×3 w`` evaluated as sequential mode products."""
    core = as_tensor3(core)
    for n, f in enumerate((u, v, w), start=1):
        f = np.asarray(f)
        if f.ndim != 2 or f.shape[1] != core.shape[n - 1]:
            raise ValueError(
                f"factor {n} has shape {f.shape}, expected (*, {core.shape[n - 1]})"
            )
    out = mode_n_product(core, u, 1)
    out = mode_n_product(out, v, 2)
    return mode_n_product(out, w, 3)


def svd(m, max_attempts: int = 2):
    """Thin SVD in double precision.

    Returns ``(U, s, Vt)`` with ``m ≈ U @ diag(s) @ Vt`` and ``s`` sorted
    descending. Falls back from the divide-and-conquer LAPACK driver to the
    QR-iteration driver before giving up.
    """
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"svd expects a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("svd input contains non-finite entries")
    drivers = ("gesdd", "gesvd")[:max_attempts]
    for attempt, driver in enumerate(drivers, start=1):
        try:
            u, s, vt = scipy.linalg.svd(a, full_matrices=False, lapack_driver=driver)
            return u, s, vt
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(f"SVD did not converge after {len(drivers)} attempts", iteration=len(drivers))


def svt(m, tau: float) -> np.ndarray:
    """Singular value soft-thresholding, the proximal map of ``tau * ||.||_*``."""
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    u, s, vt = svd(m)
    s = np.maximum(s - tau, 0.0)
    keep = s > 0
    return (u[:, keep] * s[keep]) @ vt[keep]


def nuclear_norm(m) -> float:
    return float(np.sum(svd(m)[1]))
