"""Detector defect model and CT-like conversion of grayscale images.

A defective detector row is described per detector by a response factor
``eta`` (inconsistent response) and a binary validity mask (invalid
measurement). In the log domain a response factor adds ``-ln(eta)`` to the
detector's sinogram column; an invalid detector reads zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

IR_RANGE = (0.75, 1.25)
MU_RANGE = (0.5, 0.7)


@dataclass(frozen=True)
class DetectorResponse:
    eta: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=np.float64)
        if eta.ndim != 1 or eta.shape != mask.shape:
            raise ValueError("eta and mask must be 1-D vectors of equal length")
        if not np.all(np.isin(mask, (0.0, 1.0))):
            raise ValueError("mask must be binary")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "mask", mask)

    @property
    def n_detectors(self) -> int:
        return self.eta.size

    @classmethod
    def ideal(cls, n_detectors: int) -> "DetectorResponse":
        return cls(np.ones(n_detectors), np.ones(n_detectors))


def sample_response(rng: np.random.Generator, n_detectors: int,
                    ir_fraction: float = 0.75, im_fraction: float = 0.02,
                    ir_lo: float = IR_RANGE[0], ir_hi: float = IR_RANGE[1]
                    ) -> DetectorResponse:
    """Draw a random defect pattern.

    ``floor(ir_fraction * D)`` distinct detectors get ``eta ~ U[ir_lo, ir_hi]``
    and, independently, ``floor(im_fraction * D)`` distinct detectors are
    marked invalid. A detector may be in both sets; the mask then wins.
    """
    if not (0 <= ir_fraction <= 1 and 0 <= im_fraction <= 1):
        raise ValueError("fractions must lie in [0, 1]")
    if not IR_RANGE[0] <= ir_lo <= ir_hi <= IR_RANGE[1]:
        raise ValueError(f"need {IR_RANGE[0]} <= ir_lo <= ir_hi <= {IR_RANGE[1]}")
    eta = np.ones(n_detectors)
    mask = np.ones(n_detectors)
    n_ir = int(np.floor(ir_fraction * n_detectors))
    n_im = int(np.floor(im_fraction * n_detectors))
    ir_idx = rng.choice(n_detectors, size=n_ir, replace=False)
    eta[ir_idx] = rng.uniform(ir_lo, ir_hi, size=n_ir)
    im_idx = rng.choice(n_detectors, size=n_im, replace=False)
    mask[im_idx] = 0.0
    return DetectorResponse(eta, mask)


def apply_corruption(s, response: DetectorResponse) -> np.ndarray:
    """``mask[d] * (-ln eta[d] + s[v, d])`` for every view ``v``."""
    s = np.asarray(s, dtype=np.float64)
    if s.shape[-1] != response.n_detectors:
        raise ValueError(f"sinogram has {s.shape[-1]} detectors, response has "
                         f"{response.n_detectors}")
    bad = (response.eta <= 0) & (response.mask > 0)
    if np.any(bad):
        raise ValueError(f"non-positive eta on valid detectors {np.flatnonzero(bad)[:10]}; "
                         "express invalid detectors through the mask")
    offset = np.zeros_like(response.eta)
    ok = response.mask > 0
    offset[ok] = -np.log(response.eta[ok])
    return response.mask * (offset + s)


def resize_bilinear(img, size: int) -> np.ndarray:
    """Resample to ``size x size`` with pixel-center alignment."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    r = (np.arange(size) + 0.5) * h / size - 0.5
    c = (np.arange(size) + 0.5) * w / size - 0.5
    R, C = np.meshgrid(r, c, indexing="ij")
    return ndimage.map_coordinates(img, [R, C], order=1, mode="nearest")


def circle_mask(size: int) -> np.ndarray:
    """Pixels whose centers lie inside the inscribed circle (radius size/2)."""
    c = np.arange(size) - 0.5 * (size - 1)
    return (c[:, None] ** 2 + c[None, :] ** 2) <= (0.5 * size) ** 2


def make_ct_like(gray, image_size: int, rng: np.random.Generator,
                 mu_range=MU_RANGE) -> np.ndarray:
    """Turn a [0, 1] grayscale image into a disk-shaped attenuation map.

    The image is resized, cut to the inscribed circle and scaled so that its
    maximum equals ``mu_max ~ U(mu_range)``.
    """
    gray = np.asarray(gray, dtype=np.float64)
    if gray.size == 0:
        raise ValueError("empty grayscale input")
    mu_max = rng.uniform(*mu_range)
    img = resize_bilinear(gray, image_size) * circle_mask(image_size)
    peak = img.max()
    if peak <= 0:
        return np.zeros((image_size, image_size))
    return img * (mu_max / peak)
