"""Classical sinogram-domain stripe corrections used as comparison methods."""
from __future__ import annotations

import numpy as np
import pywt
from scipy import ndimage

WAVELETS = ("haar", "db2", "db4")


def smoothed_means(s, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-detector view means and their edge-clamped moving average."""
    s = np.asarray(s, dtype=np.float64)
    m = s.mean(axis=0)
    return m, ndimage.uniform_filter1d(m, size=window, mode="nearest")


def norm_correct(s, window: int = 9) -> np.ndarray:
    """Detector-mean normalization, additive in the log domain.

    Each column is shifted by the difference between its view-averaged value
    and the moving average of those means over ``window`` neighbours.
    """
    s = np.asarray(s, dtype=np.float64)
    if window < 1 or window % 2 == 0 or window > s.shape[1]:
        raise ValueError("window must be odd, >= 1 and <= n_detectors")
    m, m_smooth = smoothed_means(s, window)
    return s - (m - m_smooth)[None, :]


def stripe_damping(n_views: int, sigma: float) -> np.ndarray:
    f = np.fft.fftfreq(n_views) * n_views
    return 1.0 - np.exp(-f ** 2 / (2.0 * sigma ** 2))


def wavefft_correct(s, levels: int = 2, sigma: float = 2.0,
                    wavelet: str = "db4") -> np.ndarray:
    """Wavelet-Fourier stripe removal.

    A multilevel 1-D wavelet transform along the detector axis isolates
    stripes in the detail bands. There they are constant over views, so each
    band is damped near zero view-frequency with
    ``1 - exp(-f^2 / (2 sigma^2))``.
    """
    s = np.asarray(s, dtype=np.float64)
    if wavelet not in WAVELETS:
        raise ValueError(f"unsupported wavelet {wavelet!r}; choose from {', '.join(WAVELETS)}")
    if levels < 1 or 2 ** levels > s.shape[1]:
        raise ValueError("need levels >= 1 and 2**levels <= n_detectors")
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    coeffs = pywt.wavedec(s, wavelet, level=levels, axis=1, mode="symmetric")
    damp = stripe_damping(s.shape[0], sigma)[:, None]
    out = [coeffs[0]]
    for band in coeffs[1:]:
        freq = np.fft.fft(band, axis=0) * damp
        out.append(np.fft.ifft(freq, axis=0).real)
    rec = pywt.waverec(out, wavelet, axis=1, mode="symmetric")
    return rec[:, :s.shape[1]]
