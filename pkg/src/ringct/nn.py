"""Forward/backward pairs for the small op set of the unrolled network.

Tensors are single samples shaped ``(channels, height, width)``. Each
forward returns its output; backward functions take the upstream gradient
plus whatever the forward needs and return input (and weight) gradients.
"""
from __future__ import annotations

import numpy as np

IN_EPS = 1e-5


def im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Patch matrix of shape ``(cin * kh * kw, H * W)`` for zero 'same' padding."""
    cin, h, w = x.shape
    ph, pw = kh // 2, kw // 2
    cols = np.empty((cin, kh, kw, h, w))
    for i in range(kh):
        di = i - ph
        r0, r1 = max(0, -di), min(h, h - di)
        for j in range(kw):
            dj = j - pw
            c0, c1 = max(0, -dj), min(w, w - dj)
            dst = cols[:, i, j]
            dst[:, r0:r1, c0:c1] = x[:, r0 + di:r1 + di, c0 + dj:c1 + dj]
            dst[:, :r0] = 0.0
            dst[:, r1:] = 0.0
            dst[:, :, :c0] = 0.0
            dst[:, :, c1:] = 0.0
    return cols.reshape(cin * kh * kw, h * w)


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None,
           cols: np.ndarray | None = None) -> np.ndarray:
    """Zero-padded 'same' cross-correlation; ``w`` is (cout, cin, kh, kw).

    ``cols`` may carry a precomputed ``im2col(x)``.
    """
    cout, cin, kh, kw = w.shape
    _, h, wd = x.shape
    if kh == 1 and kw == 1:
        out = w[:, :, 0, 0] @ x.reshape(cin, h * wd)
    else:
        if cols is None:
            cols = im2col(x, kh, kw)
        out = w.reshape(cout, -1) @ cols
    out = out.reshape(cout, h, wd)
    if b is not None:
        out += b[:, None, None]
    return out


def conv2d_backward(gout: np.ndarray, x: np.ndarray, w: np.ndarray, need_x: bool = True,
                    cols: np.ndarray | None = None):
    """Returns ``(gx, gw, gb)``; ``gx`` is None when ``need_x`` is False."""
    cout, cin, kh, kw = w.shape
    g2 = gout.reshape(cout, -1)
    if kh == 1 and kw == 1:
        gw = (g2 @ x.reshape(cin, -1).T)[:, :, None, None]
    else:
        if cols is None:
            cols = im2col(x, kh, kw)
        gw = (g2 @ cols.T).reshape(w.shape)
    gb = g2.sum(axis=1)
    gx = None
    if need_x:
        gx = conv2d(gout, np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]))
    return gx, gw, gb


def instance_norm(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel standardization over the spatial axes (no affine part).

    Returns the output and the per-channel inverse std for the backward pass.
    """
    mu = x.mean(axis=(1, 2), keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=(1, 2), keepdims=True) + IN_EPS)
    return xc * inv, inv


def instance_norm_backward(gout: np.ndarray, y: np.ndarray, inv: np.ndarray) -> np.ndarray:
    gm = gout.mean(axis=(1, 2), keepdims=True)
    gym = (gout * y).mean(axis=(1, 2), keepdims=True)
    return inv * (gout - gm - y * gym)


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(gout, x):
    return gout * (x > 0)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inv(y: float) -> float:
    return float(np.log(np.expm1(y)))


def soft(t, theta):
    """Soft thresholding ``sign(t) * max(|t| - theta, 0)``."""
    return np.sign(t) * np.maximum(np.abs(t) - theta, 0.0)


def soft_backward(gout, t, theta):
    """Gradients w.r.t. ``t`` and the scalar ``theta`` (subgradient 0 at the kink)."""
    active = np.abs(t) > theta
    return gout * active, float(-(gout * np.sign(t) * active).sum())


def kaiming_uniform(rng: np.random.Generator, shape) -> np.ndarray:
    fan_in = int(np.prod(shape[1:]))
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)
