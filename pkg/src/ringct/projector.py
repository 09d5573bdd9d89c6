"""Joseph fan-beam projector, its matched adjoint and flat-detector FBP.

The system matrix is assembled in view blocks as ``scipy.sparse`` CSR
matrices, so the backprojector is the exact transpose of the forward
projector. Small geometries keep the whole matrix in memory; large ones
rebuild each block on demand with identical weights.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .geometry import FanBeamGeometry, ray_endpoints

# entries above which operator blocks are rebuilt per call instead of cached
CACHE_LIMIT = 40_000_000
_BLOCK_ENTRIES = 4_000_000


def _view_blocks(g: FanBeamGeometry, per_view: int):
    step = max(1, _BLOCK_ENTRIES // max(1, per_view))
    return [(v0, min(g.n_views, v0 + step)) for v0 in range(0, g.n_views, step)]


def _joseph_block(g: FanBeamGeometry, v0: int, v1: int) -> sp.csr_matrix:
    """System-matrix rows for views ``v0 .. v1-1`` (row = v * n_det + d)."""
    n, ps = g.image_size, g.pixel_size
    src, end = ray_endpoints(g)
    src = src[v0:v1].reshape(-1, 2)
    end = end[v0:v1].reshape(-1, 2)
    d = end - src
    d /= np.hypot(d[:, 0], d[:, 1])[:, None]
    n_rays = src.shape[0]
    ray_idx = np.arange(n_rays)
    centers = (np.arange(n) - 0.5 * (n - 1)) * ps
    half = 0.5 * (n - 1)

    rows_all, cols_all, vals_all = [], [], []
    xdom = np.abs(d[:, 0]) >= np.abs(d[:, 1])
    for dominant in (True, False):
        sel = ray_idx[xdom == dominant]
        if sel.size == 0:
            continue
        s, u = src[sel], d[sel]
        if dominant:
            # march over pixel columns; interpolate between two rows
            t = (centers[None, :] - s[:, :1]) / u[:, :1]
            pos = half - (s[:, 1:2] + t * u[:, 1:2]) / ps
            step = ps / np.abs(u[:, 0])
        else:
            # march over pixel rows (row i has y = -centers[i])
            t = (-centers[None, :] - s[:, 1:2]) / u[:, 1:2]
            pos = (s[:, :1] + t * u[:, :1]) / ps + half
            step = ps / np.abs(u[:, 1])
        lo = np.floor(pos)
        w = pos - lo
        lo = lo.astype(np.int64)
        lin = np.broadcast_to(np.arange(n)[None, :], pos.shape)
        ray = np.broadcast_to(sel[:, None], pos.shape)
        for idx, wt in ((lo, 1.0 - w), (lo + 1, w)):
            ok = (idx >= 0) & (idx < n) & (wt > 0)
            if dominant:
                pix = idx[ok] * n + lin[ok]
            else:
                pix = lin[ok] * n + idx[ok]
            rows_all.append(ray[ok])
            cols_all.append(pix)
            vals_all.append((wt * step[:, None])[ok])
    rows = np.concatenate(rows_all)
    cols = np.concatenate(cols_all)
    vals = np.concatenate(vals_all)
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n_rays, n * n))
    return mat.tocsr()


def _fbp_block(g: FanBeamGeometry, v0: int, v1: int) -> sp.csr_matrix:
    """Distance-weighted backprojection of filtered views ``v0 .. v1-1``.

    Columns index ``(v - v0) * n_det + d``; rows index pixels.
    """
    n_pix = g.image_size ** 2
    nd = g.n_detectors
    dsc = g.dist_source_center
    tau = g.detector_spacing * dsc / g.dist_source_detector  # iso-plane pitch
    dphi = g.view_extent / g.n_views
    x, y = g.pixel_centers()
    x, y = x.ravel(), y.ravel()
    pix = np.arange(n_pix)
    rows_all, cols_all, vals_all = [], [], []
    for v in range(v0, v1):
        phi = g.view_start + g.view_extent * v / g.n_views
        c, s = math.cos(phi), math.sin(phi)
        depth = dsc - (x * c + y * s)
        t_iso = dsc * (-x * s + y * c) / depth
        pos = t_iso / tau + 0.5 * (nd - 1)
        lo = np.floor(pos)
        w = pos - lo
        lo = lo.astype(np.int64)
        weight = 0.5 * dphi * (dsc / depth) ** 2
        for idx, wt in ((lo, 1.0 - w), (lo + 1, w)):
            ok = (idx >= 0) & (idx < nd) & (wt > 0)
            rows_all.append(pix[ok])
            cols_all.append((v - v0) * nd + idx[ok])
            vals_all.append((wt * weight)[ok])
    mat = sp.coo_matrix(
        (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(n_pix, (v1 - v0) * nd))
    return mat.tocsr()


def ramp_kernel(n: int, tau: float) -> np.ndarray:
    """Spatial Ram-Lak samples h[k] for k = -(n-1) .. n-1."""
    k = np.arange(-(n - 1), n)
    h = np.zeros(k.shape)
    h[k == 0] = 1.0 / (4 * tau * tau)
    odd = (k % 2) != 0
    h[odd] = -1.0 / (np.pi * k[odd] * tau) ** 2
    return h


@lru_cache(maxsize=32)
def _ramp_response(n: int, tau: float) -> tuple[int, np.ndarray]:
    pad = 1 << int(math.ceil(math.log2(2 * n)))
    h = ramp_kernel(n, tau)
    circ = np.zeros(pad)
    circ[:n] = h[n - 1:]
    circ[pad - (n - 1):] = h[:n - 1]
    resp = np.fft.rfft(circ).real * tau
    return pad, resp


def ramp_filter(rows: np.ndarray, tau: float) -> np.ndarray:
    """Ram-Lak filter each row (last axis) by zero-padded linear convolution.

    The frequency response is the transform of the spatial kernel, so the DC
    sample is the (small, positive) sum of the truncated kernel rather than 0.
    The operator is a symmetric Toeplitz matrix, hence self-adjoint.
    """
    n = rows.shape[-1]
    pad, resp = _ramp_response(n, float(tau))
    freq = np.fft.rfft(rows, n=pad, axis=-1) * resp
    return np.fft.irfft(freq, n=pad, axis=-1)[..., :n]


class FanBeamProjector:
    """Forward projector, matched backprojector and FBP for one geometry."""

    def __init__(self, g: FanBeamGeometry):
        self.g = g
        n, nd = g.image_size, g.n_detectors
        self._a_blocks = _view_blocks(g, 2 * n * nd)
        self._b_blocks = _view_blocks(g, 2 * n * n)
        self.cache = 2 * n * nd * g.n_views <= CACHE_LIMIT
        self._A = None
        self._At = None
        self._B = None
        self._Bt = None
        t = g.detector_offsets() * g.dist_source_center / g.dist_source_detector
        self.tau = g.detector_spacing * g.dist_source_center / g.dist_source_detector
        self.cos_weight = g.dist_source_center / np.hypot(g.dist_source_center, t)
        self._norm = None

    # -- system matrix -----------------------------------------------------
    def matrix(self) -> sp.csr_matrix:
        """Full system matrix (only for geometries under the cache limit)."""
        if self._A is None:
            blocks = [_joseph_block(self.g, v0, v1) for v0, v1 in self._a_blocks]
            A = sp.vstack(blocks, format="csr")
            if not self.cache:
                return A
            self._A = A
            self._At = A.T.tocsr()
        return self._A

    def _check_image(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.g.image_shape:
            raise ValueError(f"image shape {x.shape} does not match geometry "
                             f"{self.g.image_shape}")
        return x

    def _check_sino(self, s):
        s = np.asarray(s, dtype=np.float64)
        if s.shape != self.g.sino_shape:
            raise ValueError(f"sinogram shape {s.shape} does not match geometry "
                             f"{self.g.sino_shape}")
        return s

    def forward(self, x) -> np.ndarray:
        x = self._check_image(x).ravel()
        if self.cache:
            self.matrix()
            return (self._A @ x).reshape(self.g.sino_shape)
        out = np.empty(self.g.sino_shape)
        for v0, v1 in self._a_blocks:
            out[v0:v1] = (_joseph_block(self.g, v0, v1) @ x).reshape(v1 - v0, -1)
        return out

    def back(self, s) -> np.ndarray:
        s = self._check_sino(s)
        if self.cache:
            self.matrix()
            return (self._At @ s.ravel()).reshape(self.g.image_shape)
        out = np.zeros(self.g.image_size ** 2)
        for v0, v1 in self._a_blocks:
            out += _joseph_block(self.g, v0, v1).T @ s[v0:v1].ravel()
        return out.reshape(self.g.image_shape)

    def norm_sq(self, tol: float = 1e-13, max_iter: int = 2000) -> float:
        """Largest eigenvalue of A^T A by power iteration from a fixed start."""
        if self._norm is None:
            x = np.ones(self.g.image_shape)
            x /= np.linalg.norm(x)
            lam = 0.0
            for _ in range(max_iter):
                y = self.back(self.forward(x))
                new = float((x * y).sum())  # Rayleigh quotient
                x = y / np.linalg.norm(y)
                if abs(new - lam) <= tol * new:
                    lam = new
                    break
                lam = new
            self._norm = lam
        return self._norm

    # -- filtered backprojection ----------------------------------------------
    def _bp_matrix(self):
        if self._B is None:
            blocks = [_fbp_block(self.g, v0, v1) for v0, v1 in self._b_blocks]
            B = sp.hstack(blocks, format="csr")
            if not self.cache:
                return B
            self._B = B
            self._Bt = B.T.tocsr()
        return self._B

    def _require_full_scan(self):
        if not self.g.full_scan:
            raise NotImplementedError(
                "FBP supports full 2*pi scans only; short-scan weighting is not implemented")

    def filter(self, s) -> np.ndarray:
        """Cosine pre-weighting followed by the ramp filter along detectors."""
        return ramp_filter(s * self.cos_weight[None, :], self.tau)

    def fbp(self, s) -> np.ndarray:
        self._require_full_scan()
        q = self.filter(self._check_sino(s))
        if self.cache:
            return (self._bp_matrix() @ q.ravel()).reshape(self.g.image_shape)
        out = np.zeros(self.g.image_size ** 2)
        for v0, v1 in self._b_blocks:
            out += _fbp_block(self.g, v0, v1) @ q[v0:v1].ravel()
        return out.reshape(self.g.image_shape)

    def fbp_adjoint(self, x) -> np.ndarray:
        """Transpose of :meth:`fbp` (needed to differentiate through it)."""
        self._require_full_scan()
        x = self._check_image(x).ravel()
        if self.cache:
            self._bp_matrix()
            q = (self._Bt @ x).reshape(self.g.sino_shape)
        else:
            q = np.empty(self.g.sino_shape)
            for v0, v1 in self._b_blocks:
                q[v0:v1] = (_fbp_block(self.g, v0, v1).T @ x).reshape(v1 - v0, -1)
        return ramp_filter(q, self.tau) * self.cos_weight[None, :]


@lru_cache(maxsize=16)
def get_projector(g: FanBeamGeometry) -> FanBeamProjector:
    return FanBeamProjector(g)


def forward_project(x, g: FanBeamGeometry) -> np.ndarray:
    """Line integrals of ``x`` (mu per mm) along every ray, in mu * mm."""
    return get_projector(g).forward(x)


def back_project(s, g: FanBeamGeometry) -> np.ndarray:
    """Exact adjoint of :func:`forward_project`."""
    return get_projector(g).back(s)


def fbp(s, g: FanBeamGeometry) -> np.ndarray:
    """Flat-detector fan-beam filtered backprojection (full scans)."""
    return get_projector(g).fbp(s)
