"""Hounsfield conversion and image quality metrics.

All metrics take an optional boolean ``region``; pixels outside it are
ignored (for SSIM they are zeroed in both images before filtering, so
changes outside the region cannot leak in through the window).
"""
from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

MU_WATER = 0.268
MU_AIR = 0.0


def mu_to_hu(mu) -> np.ndarray:
    # ratio form keeps the water and air anchors exact in floating point
    return 1000.0 * ((np.asarray(mu, dtype=np.float64) - MU_AIR) / (MU_WATER - MU_AIR) - 1.0)


def hu_to_mu(hu) -> np.ndarray:
    return np.asarray(hu, dtype=np.float64) * (MU_WATER - MU_AIR) / 1000.0 + MU_WATER


def _region(a, b, region):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if region is None:
        region = np.ones(a.shape, dtype=bool)
    return a, b, np.asarray(region, dtype=bool)


def mae(a, b, region=None) -> float:
    a, b, r = _region(a, b, region)
    return float(np.abs(a - b)[r].mean())


def psnr(a, b, data_range: float, region=None) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    if not data_range > 0:
        raise ValueError("data_range must be > 0")
    a, b, r = _region(a, b, region)
    mse = float(((a - b)[r] ** 2).mean())
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(data_range ** 2 / mse)


def ssim(a, b, data_range: float, region=None, sigma: float = 1.5,
         win_size: int = 11) -> float:
    """Mean SSIM with an ``win_size`` Gaussian window of std ``sigma``."""
    if not data_range > 0:
        raise ValueError("data_range must be > 0")
    a, b, r = _region(a, b, region)
    a = np.where(r, a, 0.0)
    b = np.where(r, b, 0.0)
    truncate = ((win_size - 1) / 2) / sigma
    filt = lambda z: ndimage.gaussian_filter(z, sigma, truncate=truncate, mode="reflect")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mu_a, mu_b = filt(a), filt(b)
    # symmetric expressions keep ssim(a, b) == ssim(b, a) bit-for-bit
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float((num / den)[r].mean())


def hu_metrics(pred_mu, ref_mu, region=None, data_range: float | None = None) -> dict:
    """MAE [HU], PSNR [dB] and SSIM of ``pred_mu`` against ``ref_mu``.

    ``data_range`` defaults to the HU range of the reference inside ``region``.
    """
    p, t = mu_to_hu(pred_mu), mu_to_hu(ref_mu)
    _, _, r = _region(p, t, region)
    if data_range is None:
        data_range = float(np.ptp(t[r])) or 1.0
    return {"mae_hu": mae(p, t, r), "psnr_db": psnr(p, t, data_range, r),
            "ssim": ssim(p, t, data_range, r)}


def circle_variance(image, radius_px: float, n_samples: int = 720) -> float:
    """Variance of bilinear samples along a circle centered on the image.

    ``radius_px`` is in pixels. Concentric ring artifacts are constant along
    such circles only when the underlying stripe is view-independent, so a
    high value flags a ring with angular structure.
    """
    img = np.asarray(image, dtype=np.float64)
    th = np.linspace(0.0, 2 * np.pi, n_samples, endpoint=False)
    ci, cj = 0.5 * (img.shape[0] - 1), 0.5 * (img.shape[1] - 1)
    rows = ci - radius_px * np.sin(th)
    cols = cj + radius_px * np.cos(th)
    return float(ndimage.map_coordinates(img, [rows, cols], order=1).var())
