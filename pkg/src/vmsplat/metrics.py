"""Image comparison metrics over float images in [0, 1]."""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import correlate

from vmsplat.errors import DataError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB against a unit dynamic range.

    Identical images return +inf (callers render it as a sentinel string
    where a finite number is required).
    """
    if a.shape != b.shape:
        raise DataError(f"shape mismatch {a.shape} vs {b.shape}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_kernel(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    k = np.outer(g, g)
    return k / k.sum()


def _ssim_channel(x: np.ndarray, y: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    mu_x = correlate(x, kernel, mode="reflect")
    mu_y = correlate(y, kernel, mode="reflect")
    xx = correlate(x * x, kernel, mode="reflect") - mu_x * mu_x
    yy = correlate(y * y, kernel, mode="reflect") - mu_y * mu_y
    xy = correlate(x * y, kernel, mode="reflect") - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return num / den


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Border windows use reflected samples; the score is the mean over interior
    pixels only (full windows), per channel, then over channels.
    """
    if a.shape != b.shape:
        raise DataError(f"shape mismatch {a.shape} vs {b.shape}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    h, w = a.shape[:2]
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise DataError(f"image {h}x{w} smaller than the {SSIM_WINDOW}px window")
    kernel = _gaussian_kernel()
    pad = SSIM_WINDOW // 2
    vals = []
    for ch in range(a.shape[2]):
        s = _ssim_channel(a[:, :, ch], b[:, :, ch], kernel)
        vals.append(float(np.mean(s[pad : h - pad, pad : w - pad])))
    return float(np.mean(vals))
