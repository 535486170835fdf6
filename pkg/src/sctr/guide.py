"""Coarse guide tensor by HaLRTC and its conversion to a 2D feature image.

The guide only drives segmentation and rank estimation, so the solver is a
plain ADMM on the sum of weighted nuclear norms of the three unfoldings
(Liu et al., HaLRTC), with the observed entries held fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import as_tensor3, fold, nuclear_norm, svt, unfold

MAX_GUIDE_SLICES = 64


@dataclass
class GuideResult:
    guide: np.ndarray
    iterations_run: int
    final_residual: float
    objective: list[float] = field(default_factory=list)
    axis3_stride: int = 1


@dataclass
class FeatureImage:
    image: np.ndarray
    raw: np.ndarray
    mode: str
    fell_back: bool = False


def check_mask(mask, shape) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != tuple(shape):
        raise ValueError(f"mask shape {mask.shape} does not match tensor shape {tuple(shape)}")
    if not mask.any():
        raise ValueError("mask has no observed entries")
    return mask


def weighted_nuclear_objective(x: np.ndarray, weights) -> float:
    return float(sum(a * nuclear_norm(unfold(x, n)) for n, a in enumerate(weights, start=1) if a > 0))


def halrtc_complete(
    observed,
    mask,
    weights=(1 / 3, 1 / 3, 1 / 3),
    rho: float = 1e-2,
    max_iters: int = 300,
    tol: float = 1e-5,
    rho_growth: float = 1.03,
    track_objective: bool = False,
    center: bool = False,
) -> GuideResult:
    """Complete ``observed`` on the entries where ``mask`` is False.

    Missing entries start at the mean of the observed ones. Each iteration
    applies singular value thresholding to every unfolding, averages the
    three estimates, re-imposes the observations and updates the duals.
    Stops once ``||X_t - X_{t-1}|| / ||X_{t-1}|| < tol`` with at least one
    nonzero thresholded unfolding. ``objective`` (when tracked) holds the
    weighted nuclear norm of each iterate ``X_1 .. X_T``.

    With ``center=True`` the observed mean is subtracted first and added back
    at the end, so the nuclear-norm prior acts on deviations from the mean
    rather than pulling unobserved entries toward zero.
    """
    observed = as_tensor3(observed, dtype=np.float64)
    mask = check_mask(mask, observed.shape)
    weights = tuple(float(a) for a in weights)
    if len(weights) != 3 or min(weights) < 0 or not math.isclose(sum(weights), 1.0, abs_tol=1e-9):
        raise ValueError(f"weights must be 3 nonnegative numbers summing to 1, got {weights}")
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")

    if center and not mask.all():
        mu = float(observed[mask].mean())
        res = halrtc_complete(np.where(mask, observed - mu, 0.0), mask, weights, rho, max_iters, tol,
                              rho_growth, track_objective)
        res.guide = np.where(mask, observed, res.guide + mu)
        return res

    if mask.all():
        return GuideResult(guide=observed.copy(), iterations_run=1, final_residual=0.0,
                           objective=[weighted_nuclear_objective(observed, weights)] if track_objective else [])

    x = np.where(mask, observed, observed[mask].mean())
    duals = [np.zeros_like(x) for _ in range(3)]
    objective = []
    residual = math.inf
    it = 0
    for it in range(1, max_iters + 1):
        ms = []
        for n, a in enumerate(weights, start=1):
            z = unfold(x + duals[n - 1] / rho, n)
            ms.append(fold(svt(z, a / rho), n, x.shape))
        # While rho is small every unfolding is shrunk to zero and X barely
        # moves; that is not convergence.
        active = any(np.any(m) for m in ms)
        x_new = sum(m - y / rho for m, y in zip(ms, duals)) / 3.0
        x_new = np.where(mask, observed, x_new)
        for n in range(3):
            duals[n] = duals[n] - rho * (ms[n] - x_new)
        denom = np.linalg.norm(x)
        residual = float(np.linalg.norm(x_new - x) / (denom if denom > 0 else 1.0))
        x = x_new
        rho *= rho_growth
        if track_objective:
            objective.append(weighted_nuclear_objective(x, weights))
        if active and residual < tol:
            break
    return GuideResult(guide=x, iterations_run=it, final_residual=residual, objective=objective)


def strided_guide(observed, mask, max_slices: int = MAX_GUIDE_SLICES, **kwargs) -> GuideResult:
    """Run :func:`halrtc_complete` on an axis-3 subsample keeping at most ``max_slices``."""
    observed = as_tensor3(observed)
    stride = max(1, math.ceil(observed.shape[2] / max_slices))
    if stride == 1:
        return halrtc_complete(observed, mask, **kwargs)
    mask = np.asarray(mask, dtype=bool)
    sub_mask = mask[:, :, ::stride]
    if not sub_mask.any():
        raise ValueError("strided subsample has no observed entries")
    res = halrtc_complete(observed[:, :, ::stride], sub_mask, **kwargs)
    res.axis3_stride = stride
    return res


def _rescale01(a: np.ndarray) -> np.ndarray:
    lo, hi = float(a.min()), float(a.max())
    if hi - lo <= 0:
        return np.zeros_like(a, dtype=np.float64)
    return (a - lo) / (hi - lo)


def guide_to_feature_image(guide, mode: str = "gray_mean") -> FeatureImage:
    """Collapse axis 3 of the guide into a feature image for SLIC.

    ``gray_mean`` gives an (I1, I2) image, ``pca3`` an (I1, I2, 3) image of
    the leading principal components of the axis-3 fibers. Each channel is
    min-max rescaled to [0, 1]; ``raw`` keeps the values before rescaling.
    """
    guide = as_tensor3(guide, dtype=np.float64)
    if mode not in ("gray_mean", "pca3"):
        raise ValueError(f"unknown feature mode {mode!r}")
    fell_back = False
    if mode == "pca3" and guide.shape[2] < 3:
        mode, fell_back = "gray_mean", True
    if mode == "gray_mean":
        raw = guide.mean(axis=2)
        return FeatureImage(_rescale01(raw), raw, mode, fell_back)
    h, w, c = guide.shape
    fibers = guide.reshape(h * w, c)
    centered = fibers - fibers.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:3]
    # Fix the sign so the largest loading of each component is positive.
    signs = np.sign(comps[np.arange(3), np.abs(comps).argmax(axis=1)])
    signs[signs == 0] = 1.0
    raw = (centered @ (comps * signs[:, None]).T).reshape(h, w, 3)
    image = np.stack([_rescale01(raw[:, :, i]) for i in range(3)], axis=2)
    return FeatureImage(image, raw, mode, fell_back)
