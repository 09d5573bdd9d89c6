"""Central finite-difference check of compute_loss gradients."""
import math

import numpy as np

from ringct.geometry import FanBeamGeometry
from ringct.model import _run, compute_loss, init_model
from ringct.phantoms import gaussian_blob
from ringct.physics import DetectorResponse, apply_corruption
from ringct.projector import forward_project

PROBE = FanBeamGeometry(16, 1.0, 24, 2.0, 32, 0.0, 2 * math.pi, 40.0, 40.0, "probe16")
RTOL = 1e-4
H = 1e-4
H_MIN = 1e-8


def probe_problem(mode="full", precond="adjoint", seed=0):
    rng = np.random.default_rng(seed)
    x = gaussian_blob(16, 4.0) + gaussian_blob(16, 2.0, 0.15, (3.0, -2.0))
    eta = np.ones(24)
    eta[rng.choice(24, 12, replace=False)] = rng.uniform(0.8, 1.2, 12)
    mask = np.ones(24)
    mask[[5, 17]] = 0.0
    y = apply_corruption(forward_project(x, PROBE), DetectorResponse(eta, mask))
    return generic_model(5, 8, mode, precond, seed), y, x, eta, mask


def generic_model(K, channels, mode, precond, seed):
    """Fresh model moved off its init so that no gradient is identically zero."""
    rng = np.random.default_rng(seed + 100)
    model = init_model(K, channels, mode, seed, precond, True, None, PROBE.name)
    for k in range(K):
        model.params[f"k{k}.rho"] += 0.1 * rng.normal()
        model.params[f"k{k}.theta"] += 0.1 * rng.normal()
        h2 = model.params[f"k{k}.h2"]
        h2[:] = rng.uniform(-0.3, 0.3, h2.shape)
    return model


def gates(model, y):
    """Every ReLU and soft-threshold on/off pattern of one forward pass."""
    st = _run(model, y, PROBE, binarize=False, keep=True)
    out = []
    for it in st["iters"]:
        out += [it["a1"] > 0, it["c1"] > 0, it["c1s"] > 0, np.abs(it["gf"]) > it["theta"]]
    for key in ("ir_cache", "im_cache"):
        if key in st:
            out += [n > 0 for _, n, _ in st[key][0]]
    return out


def same_gates(a, b):
    return all(np.array_equal(u, v) for u, v in zip(a, b))


def check_all(model, y, x, eta, mask, input_entries=()):
    """Analytic vs numeric gradient for every parameter entry.

    Returns ``({name: (analytic, numeric)}, n_shrunk)``; the sinogram ``y`` is
    included under the name ``"y"`` for the listed ``input_entries``. ``h`` is
    divided by 10 for an entry only while a +-h perturbation flips some gate.
    """
    _, grads, _ = compute_loss(model, y, PROBE, x, eta, mask)
    base = gates(model, y)

    def loss():
        return compute_loss(model, y, PROBE, x, eta, mask, need_grad=False)[0]

    def fd(arr, idx, h):
        old = arr[idx]
        arr[idx] = old + h
        lp = loss()
        arr[idx] = old - h
        lm = loss()
        arr[idx] = old
        return (lp - lm) / (2 * h)

    def flipped(arr, idx, h):
        old = arr[idx]
        res = False
        for d in (h, -h):
            arr[idx] = old + d
            res = res or not same_gates(gates(model, y), base)
        arr[idx] = old
        return res

    targets = [(name, model.params[name], range(model.params[name].size))
               for name in sorted(model.params)]
    if len(input_entries):
        targets.append(("y", y, [np.ravel_multi_index(e, y.shape) for e in input_entries]))
    out, shrunk = {}, 0
    for name, arr, flat in targets:
        ga, gn = [], []
        for i in flat:
            idx = np.unravel_index(i, arr.shape)
            a = float(grads[name][idx])
            h = H
            num = fd(arr, idx, h)
            while not close(a, num) and h > H_MIN and flipped(arr, idx, h):
                h /= 10
                shrunk += 1
                num = fd(arr, idx, h)
            ga.append(a)
            gn.append(num)
        out[name] = (np.array(ga), np.array(gn))
    return out, shrunk


def close(a, num):
    return abs(a - num) <= RTOL * max(abs(a), abs(num))


def tensor_error(a, num) -> float:
    """Relative error of a whole parameter tensor's gradient."""
    return float(np.linalg.norm(a - num) / max(np.linalg.norm(a), np.linalg.norm(num), 1e-300))
