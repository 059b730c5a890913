"""Image-quality metrics: windowed SSIM (global and RoI), RMSE, PSNR."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .core import ConfigError, RoI, as_image, roi_extract

SSIM_SIGMA = 1.5
DEFAULT_WINDOW = 11


def _gaussian_window(size: int, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _valid_filter(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable Gaussian mean over every fully contained window
    half = len(g) // 2
    out = correlate1d(img, g, axis=0, mode="constant")
    out = correlate1d(out, g, axis=1, mode="constant")
    return out[half:img.shape[0] - half, half:img.shape[1] - half]


def _pair(a, b):
    a = as_image(a, "a")
    b = as_image(b, "b")
    if a.shape != b.shape:
        raise ConfigError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def ssim_map(a, b, window: int = DEFAULT_WINDOW, dynamic_range: float = 1.0) -> np.ndarray:
    a, b = _pair(a, b)
    if window < 1 or window % 2 == 0:
        raise ConfigError("window must be a positive odd integer")
    if window > min(a.shape):
        raise ConfigError(f"window {window} larger than image {a.shape}")
    if not dynamic_range > 0:
        raise ConfigError("dynamic_range must be positive")
    g = _gaussian_window(window)
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    mu_a = _valid_filter(a, g)
    mu_b = _valid_filter(b, g)
    var_a = _valid_filter(a * a, g) - mu_a * mu_a
    var_b = _valid_filter(b * b, g) - mu_b * mu_b
    cov = _valid_filter(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, window: int = DEFAULT_WINDOW, dynamic_range: float = 1.0) -> float:
    """Mean SSIM over all windows lying fully inside the image.

    Gaussian window (sigma 1.5) with the usual C1 = (0.01 R)^2 and
    C2 = (0.03 R)^2 stabilisers.
    """
    return float(np.mean(ssim_map(a, b, window, dynamic_range)))


def ssim_roi(a, b, roi: RoI, window: int = DEFAULT_WINDOW, dynamic_range: float = 1.0) -> float:
    a, b = _pair(a, b)
    if roi.width < window or roi.height < window:
        raise ConfigError(f"roi {roi.width}x{roi.height} smaller than the {window}px window")
    return ssim(roi_extract(a, roi), roi_extract(b, roi), window, dynamic_range)


def data_range(truth) -> float:
    """Dynamic range taken from the ground truth, never from a reconstruction."""
    truth = as_image(truth)
    r = float(truth.max() - truth.min())
    return r if r > 0 else 1.0


def rmse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    mse = rmse(a, b) ** 2
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


def total_variation(img) -> float:
    img = as_image(img)
    return float(np.abs(np.diff(img, axis=0)).sum() + np.abs(np.diff(img, axis=1)).sum())


@dataclass(frozen=True)
class Metrics:
    ssim_global: float
    ssim_roi: float
    rmse: float
    psnr: float


def evaluate(recon, truth, roi: RoI | None = None, window: int = DEFAULT_WINDOW) -> Metrics:
    r = data_range(truth)
    roi_val = ssim_roi(recon, truth, roi, window, r) if roi is not None else float("nan")
    return Metrics(ssim(recon, truth, window, r), roi_val, rmse(recon, truth),
                   psnr(recon, truth, peak=r))
