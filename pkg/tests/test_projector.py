import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ringct.geometry import FanBeamGeometry, geometry_preset, ray_for
from ringct.metrics import psnr
from ringct.phantoms import disk_image, gaussian_blob
from ringct.physics import circle_mask
from ringct.projector import (back_project, fbp, forward_project, get_projector, ramp_filter,
                              ramp_kernel)

DESK = geometry_preset("desk")
TINY = FanBeamGeometry(8, 1.0, 12, 1.5, 16, 0.0, 2 * math.pi, 20.0, 20.0, "tiny")
SMALL = FanBeamGeometry(16, 1.0, 24, 2.0, 32, 0.0, 2 * math.pi, 40.0, 40.0, "small")


def explicit_matrix(g):
    n = g.image_size
    cols = []
    for k in range(n * n):
        e = np.zeros(n * n)
        e[k] = 1.0
        cols.append(forward_project(e.reshape(n, n), g).ravel())
    return np.stack(cols, axis=1)


def test_zero_in_zero_out():
    assert not forward_project(np.zeros(DESK.image_shape), DESK).any()
    assert not back_project(np.zeros(DESK.sino_shape), DESK).any()
    assert not fbp(np.zeros(DESK.sino_shape), DESK).any()


def test_shape_mismatch_errors():
    with pytest.raises(ValueError):
        forward_project(np.zeros((8, 8)), DESK)
    with pytest.raises(ValueError):
        back_project(np.zeros((5, 96)), DESK)


def test_linearity_random_16px_images():
    rng = np.random.default_rng(1)
    for _ in range(10):
        x, y = rng.random((2, 16, 16))
        a, b = rng.normal(size=2)
        lhs = forward_project(a * x + b * y, SMALL)
        rhs = a * forward_project(x, SMALL) + b * forward_project(y, SMALL)
        assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(rhs)
        s = rng.normal(size=SMALL.sino_shape)
        assert np.allclose(back_project(a * s, SMALL), a * back_project(s, SMALL), rtol=1e-12)


def test_backprojector_is_explicit_transpose():
    A = explicit_matrix(TINY)
    assert A.shape == (16 * 12, 64)
    rng = np.random.default_rng(2)
    for _ in range(5):
        s = rng.normal(size=TINY.sino_shape)
        assert np.allclose(back_project(s, TINY).ravel(), A.T @ s.ravel(), rtol=0, atol=1e-8)


@pytest.mark.parametrize("gid, pairs", [("desk", 100), ("g1/8", 100), ("g2/8", 5),
                                        ("g3/8", 5), ("g4/8", 5), ("g5/8", 5),
                                        ("g6/8", 5), ("ldct/8", 5)])
def test_dot_product(gid, pairs):
    g = geometry_preset(gid)
    rng = np.random.default_rng(3)
    for _ in range(pairs):
        x = rng.normal(size=g.image_shape)
        y = rng.normal(size=g.sino_shape)
        ax = forward_project(x, g)
        lhs, rhs = np.vdot(ax, y), np.vdot(x, back_project(y, g))
        assert abs(lhs - rhs) <= 1e-10 * np.linalg.norm(ax) * np.linalg.norm(y)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_back_projection_of_nonnegative_is_nonnegative(seed):
    s = np.random.default_rng(seed).random(TINY.sino_shape)
    assert back_project(s, TINY).min() >= 0


def _dense_line_integral(img, g, ray, step=0.01):
    """Piecewise-constant pixel lookup every ``step`` pixels along the ray."""
    n = g.image_size
    t = np.arange(0.0, ray.length_to_detector, step * g.pixel_size) + 0.5 * step
    px = ray.origin[0] + t * ray.direction[0]
    py = ray.origin[1] + t * ray.direction[1]
    j = np.floor(px / g.pixel_size + 0.5 * n).astype(int)
    i = np.floor(0.5 * n - py / g.pixel_size).astype(int)
    ok = (i >= 0) & (i < n) & (j >= 0) & (j < n)
    return img[i[ok], j[ok]].sum() * step * g.pixel_size


def test_disk_chords_analytic_and_dense_sampling():
    r = 25.0
    img = disk_image(DESK.image_size, r, 1.0)
    sino = forward_project(img, DESK)
    s = DESK.detector_iso_distance()
    keep = s < 0.95 * r
    chord = 2 * np.sqrt(r * r - s[keep] ** 2)
    rel = (sino[:, keep] - chord[None, :]) / chord[None, :]
    assert np.sqrt(np.mean(rel ** 2)) <= 0.01
    dets = np.flatnonzero(keep)
    for v in (0, 17, 45, 90):
        dense = np.array([_dense_line_integral(img, DESK, ray_for(DESK, v, d)) for d in dets])
        rel = (sino[v, keep] - dense) / dense
        assert np.sqrt(np.mean(rel ** 2)) <= 0.01


def test_rotationally_symmetric_phantom_gives_view_independent_rows():
    s = forward_project(gaussian_blob(64, 8.0, 0.5), DESK)
    assert np.abs(s - s.mean(axis=0)).max() <= 1e-3 * np.abs(s).max()


def test_fbp_gaussian_blob_psnr():
    x = gaussian_blob(64, 6.0, 0.5, center=(4.0, -3.0))
    rec = fbp(forward_project(x, DESK), DESK)
    region = circle_mask(64)
    assert psnr(rec, x, float(np.ptp(x[region])), region) >= 30.0


def test_fbp_rejects_short_scan():
    g = FanBeamGeometry(8, 1.0, 12, 1.5, 16, 0.0, math.pi, 20.0, 20.0, "short")
    with pytest.raises(NotImplementedError):
        fbp(np.zeros(g.sino_shape), g)


def test_fbp_adjoint_is_transpose():
    P = get_projector(TINY)
    rng = np.random.default_rng(4)
    for _ in range(5):
        s = rng.normal(size=TINY.sino_shape)
        x = rng.normal(size=TINY.image_shape)
        assert np.vdot(P.fbp(s), x) == pytest.approx(np.vdot(s, P.fbp_adjoint(x)), rel=1e-12)


def test_ramp_filter_dc_gain_is_kernel_sum():
    # the kernel defines the DC sample; it shrinks like 1/(pi^2 * padded length)
    for n in (16, 64, 256):
        row = np.ones((1, n))
        tau = 1.0
        k = ramp_kernel(n, tau)
        pad = 1 << math.ceil(math.log2(2 * n))
        dc = np.fft.rfft(np.concatenate([k[n - 1:], np.zeros(pad - 2 * n + 1), k[:n - 1]]))[0]
        assert dc.real * tau == pytest.approx(k.sum() * tau, rel=1e-12)
        assert 0 < k.sum() < 2.0 / (np.pi ** 2 * n)
        if n >= 64:
            # interior of a filtered constant row is near zero relative to the input
            out = ramp_filter(row, tau)
            assert np.abs(out[0, n // 4: 3 * n // 4]).max() < 0.01


def test_ramp_filter_is_self_adjoint():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=(2, 3, 40))
    assert np.vdot(ramp_filter(a, 0.7), b) == pytest.approx(np.vdot(a, ramp_filter(b, 0.7)),
                                                            rel=1e-12)


def test_uncached_path_matches_cached():
    P = get_projector(DESK)
    from ringct.projector import FanBeamProjector
    Q = FanBeamProjector(DESK)
    Q.cache = False
    x = gaussian_blob(64, 5.0)
    s = P.forward(x)
    assert np.allclose(Q.forward(x), s, rtol=0, atol=1e-12)
    assert np.allclose(Q.back(s), P.back(s), rtol=0, atol=1e-9)
    assert np.allclose(Q.fbp(s), P.fbp(s), rtol=0, atol=1e-12)
