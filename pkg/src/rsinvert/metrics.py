"""Reference image-quality metrics against ground truth."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .core import BT601_WEIGHTS, Frame, GeometryError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricReport:
    """PSNR (dB, +inf for identical inputs) and SSIM in [-1, 1]."""

    psnr: float
    ssim: float

    def as_dict(self) -> dict:
        return {"psnr": self.psnr, "ssim": self.ssim}


def _as_array(image) -> np.ndarray:
    data = image.data if isinstance(image, Frame) else np.asarray(image)
    return data.astype(np.float64, copy=False)


def _to_gray(arr: np.ndarray) -> np.ndarray:
    if arr.ndim == 3:
        return arr @ BT601_WEIGHTS
    return arr


def psnr(a, b, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) over all channels; +inf when identical."""
    av, bv = _as_array(a), _as_array(b)
    if av.shape != bv.shape:
        raise GeometryError(f"shape mismatch: {av.shape} vs {bv.shape}")
    mse = float(np.mean((av - bv) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    g = np.exp(-((np.arange(size) - half) ** 2) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def ssim(
    a,
    b,
    peak: float = 1.0,
    k1: float = SSIM_K1,
    k2: float = SSIM_K2,
    window: int = SSIM_WINDOW,
    sigma: float = SSIM_SIGMA,
) -> float:
    """Mean structural similarity over valid Gaussian windows.

    Color inputs are reduced to luminance first. Requires both image sides
    to be at least the window size.
    """
    av, bv = _as_array(a), _as_array(b)
    if av.shape != bv.shape:
        raise GeometryError(f"shape mismatch: {av.shape} vs {bv.shape}")
    av, bv = _to_gray(av), _to_gray(bv)
    if min(av.shape) < window:
        raise ValueError(f"image sides must be >= {window}, got {av.shape}")

    kernel = _gaussian_kernel(window, sigma)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2

    mu_a = convolve2d(av, kernel, mode="valid")
    mu_b = convolve2d(bv, kernel, mode="valid")
    var_a = convolve2d(av * av, kernel, mode="valid") - mu_a * mu_a
    var_b = convolve2d(bv * bv, kernel, mode="valid") - mu_b * mu_b
    cov = convolve2d(av * bv, kernel, mode="valid") - mu_a * mu_b

    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def compare(a, b, peak: float = 1.0) -> MetricReport:
    return MetricReport(psnr=psnr(a, b, peak), ssim=ssim(a, b, peak))
