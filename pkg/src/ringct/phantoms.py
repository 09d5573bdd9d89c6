"""Deterministic test phantoms and procedural grayscale sources."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

# (value, semi-axis a, semi-axis b, center x, center y, rotation in degrees),
# unit-square coordinates. Contrast-enhanced ten-ellipse head phantom.
SHEPP_ELLIPSES = (
    (1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.80, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.20, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.20, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.10, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.10, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.10, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.10, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
)


def ellipse_image(ellipses, size: int, supersample: int = 4) -> np.ndarray:
    """Rasterize a sum of constant ellipses on ``[-1, 1]^2``.

    Each pixel value is the average over ``supersample**2`` sub-samples.
    """
    n = size * supersample
    c = (2.0 * np.arange(n) + 1 - n) / n  # exactly antisymmetric about 0
    X, Y = np.meshgrid(c, -c)
    img = np.zeros((n, n))
    for val, a, b, x0, y0, deg in ellipses:
        th = np.deg2rad(deg)
        xr = (X - x0) * np.cos(th) + (Y - y0) * np.sin(th)
        yr = -(X - x0) * np.sin(th) + (Y - y0) * np.cos(th)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += val
    return img.reshape(size, supersample, size, supersample).mean(axis=(1, 3))


def shepp_phantom(size: int) -> np.ndarray:
    """Ten-ellipse head phantom with attenuation in [0, 0.5] per mm."""
    if size < 16:
        raise ValueError("phantom size must be >= 16")
    img = np.clip(ellipse_image(SHEPP_ELLIPSES, size), 0.0, None)
    return 0.5 * img / img.max()


def disk_image(size: int, radius_px: float, value: float = 1.0,
               supersample: int = 8) -> np.ndarray:
    """Centered disk with anti-aliased edge (area coverage per pixel)."""
    r = 2.0 * radius_px / size
    return value * ellipse_image([(1.0, r, r, 0.0, 0.0, 0.0)], size, supersample)


def gaussian_blob(size: int, sigma_px: float = 8.0, amplitude: float = 0.5,
                  center=(0.0, 0.0)) -> np.ndarray:
    """Smooth isotropic Gaussian; ``center`` is an (x, y) offset in pixels."""
    c = np.arange(size) - 0.5 * (size - 1)
    X, Y = np.meshgrid(c, -c)
    return amplitude * np.exp(-((X - center[0]) ** 2 + (Y - center[1]) ** 2)
                              / (2 * sigma_px ** 2))


def random_texture(size: int, rng: np.random.Generator) -> np.ndarray:
    """Procedural grayscale image in [0, 1] standing in for a natural photo.

    Mixes a smooth random field, a few random ellipses with sharp edges and a
    linear shading ramp.
    """
    field = ndimage.gaussian_filter(rng.standard_normal((size, size)),
                                    sigma=rng.uniform(1.5, 6.0) * size / 64)
    field = (field - field.min()) / (np.ptp(field) + 1e-12)
    shapes = []
    for _ in range(rng.integers(3, 9)):
        shapes.append((rng.uniform(-0.6, 0.6), rng.uniform(0.05, 0.5),
                       rng.uniform(0.05, 0.5), rng.uniform(-0.7, 0.7),
                       rng.uniform(-0.7, 0.7), rng.uniform(0, 180)))
    blobs = ellipse_image(shapes, size, supersample=2)
    c = np.linspace(-1, 1, size)
    X, Y = np.meshgrid(c, c)
    ang = rng.uniform(0, 2 * np.pi)
    ramp = X * np.cos(ang) + Y * np.sin(ang)
    img = (rng.uniform(0.3, 1.0) * field + blobs
           + rng.uniform(0.0, 0.4) * ramp)
    img -= img.min()
    return img / (img.max() + 1e-12)
