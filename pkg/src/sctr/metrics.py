"""PSNR and SSIM.

SSIM uses the Wang et al. (2004) single-scale setup: an 11x11 Gaussian window
with sigma 1.5, ``C1 = (0.01 * peak)**2``, ``C2 = (0.03 * peak)**2`` and
"valid" filtering (no padding). A 3D tensor is scored band by band along
axis 3 and the band scores are averaged.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

CSV_FIELDS = ("dataset", "method", "sampling_rate", "psnr_db", "ssim")


@dataclass
class MetricReport:
    psnr_db: float
    ssim: float
    per_band_psnr: list[float] = field(default_factory=list)
    peak: float = 1.0

    def csv_row(self, dataset: str, method: str, sampling_rate: float) -> dict:
        return {
            "dataset": dataset,
            "method": method,
            "sampling_rate": sampling_rate,
            "psnr_db": self.psnr_db,
            "ssim": self.ssim,
        }

    def to_csv(self, dataset: str, method: str, sampling_rate: float, header: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        if header:
            writer.writeheader()
        writer.writerow(self.csv_row(dataset, method, sampling_rate))
        return buf.getvalue()


def _mse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(np.square(a.astype(np.float64) - b.astype(np.float64))))


def psnr(reference, estimate, peak: float = 1.0) -> float:
    reference = np.asarray(reference)
    estimate = np.asarray(estimate)
    if reference.shape != estimate.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs {estimate.shape}")
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    mse = _mse(reference, estimate)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 1D Gaussian taps; the 2D window is their outer product."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # Separable correlation; the window is symmetric so this equals convolution.
    n = g.size
    rows = sliding_window_view(img, n, axis=0) @ g
    return sliding_window_view(rows, n, axis=1) @ g


def _ssim_band(x: np.ndarray, y: np.ndarray, peak: float) -> float:
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if min(x.shape) < SSIM_WINDOW:
        raise ValueError(f"SSIM window {SSIM_WINDOW} larger than image {x.shape}")
    x = x.astype(np.float64)
    y = y.astype(np.float64)
    g = gaussian_window()
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    mu_x = _filter_valid(x, g)
    mu_y = _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mu_x**2
    syy = _filter_valid(y * y, g) - mu_y**2
    sxy = _filter_valid(x * y, g) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def ssim(reference, estimate, peak: float = 1.0) -> float:
    reference = np.asarray(reference)
    estimate = np.asarray(estimate)
    if reference.shape != estimate.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs {estimate.shape}")
    if reference.ndim == 2:
        return _ssim_band(reference, estimate, peak)
    if reference.ndim == 3:
        bands = [
            _ssim_band(reference[:, :, b], estimate[:, :, b], peak)
            for b in range(reference.shape[2])
        ]
        return float(np.mean(bands))
    raise ValueError(f"ssim expects a 2D band or 3D tensor, got ndim={reference.ndim}")


def evaluate(reference, estimate, peak: float = 1.0) -> MetricReport:
    reference = np.asarray(reference)
    estimate = np.asarray(estimate)
    per_band = []
    if reference.ndim == 3 and reference.shape == estimate.shape:
        per_band = [
            psnr(reference[:, :, b], estimate[:, :, b], peak) for b in range(reference.shape[2])
        ]
    return MetricReport(
        psnr_db=psnr(reference, estimate, peak),
        ssim=ssim(reference, estimate, peak),
        per_band_psnr=per_band,
        peak=peak,
    )
