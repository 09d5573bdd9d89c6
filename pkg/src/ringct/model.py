"""Unrolled ISTA reconstruction with learned detector-response estimators.

Each of the K stages takes a data-consistency gradient step through the
defect-aware forward operator

    A~ x = m * (-ln(eta) + A x)

followed by a learned proximal map ``Ghat(soft(G(r), theta))``. Two small
sinogram CNNs estimate the per-detector response ``eta`` and validity mask
``m`` once per reconstruction. Gradients of the training loss are
propagated by hand through the whole unrolled graph, including the
projector (whose derivative is its adjoint).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .geometry import FanBeamGeometry
from .projector import get_projector

MODES = ("backbone", "no_im", "no_ir", "full")
PRECONDS = ("adjoint", "fbp")
IR_OFFSET, IR_SCALE = 0.75, 0.5
RHO_INIT, THETA_INIT = 0.5, 0.01
LAMBDA_CONS = 0.01


def mode_flags(mode: str) -> tuple[bool, bool]:
    """(uses IR estimate, uses IM estimate) for an ablation mode."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")
    return mode in ("no_im", "full"), mode in ("no_ir", "full")


@dataclass
class UnrolledModel:
    K: int
    channels: int
    mode: str = "full"
    params: dict = field(default_factory=dict)
    precond: str = "adjoint"
    residual: bool = True
    est_channels: int = 8
    geometry_id: str = ""

    @property
    def uses_ir(self) -> bool:
        return mode_flags(self.mode)[0]

    @property
    def uses_im(self) -> bool:
        return mode_flags(self.mode)[1]

    def rho(self, k: int) -> float:
        return float(nn.softplus(self.params[f"k{k}.rho"][0]))

    def theta(self, k: int) -> float:
        return float(nn.softplus(self.params[f"k{k}.theta"][0]))

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())


def estimator_params(rng, channels: int, prefix: str) -> dict:
    c = channels
    return {
        f"{prefix}.w1": nn.kaiming_uniform(rng, (c, 1, 3, 3)),
        f"{prefix}.w2": nn.kaiming_uniform(rng, (c, c, 3, 3)),
        f"{prefix}.w3": nn.kaiming_uniform(rng, (c, c, 3, 3)),
        f"{prefix}.wh": nn.kaiming_uniform(rng, (1, c, 1, 1)),
        f"{prefix}.bh": np.zeros(1),
    }


def init_model(K: int = 15, channels: int = 64, mode: str = "full", seed: int = 0,
               precond: str = "adjoint", residual: bool = True,
               est_channels: int | None = None, geometry_id: str = "") -> UnrolledModel:
    """Fresh model with seeded fan-in uniform weights.

    Step sizes start at 0.5 and thresholds at 0.01 (both stored through a
    softplus so they stay positive). In the residual form the last Ghat
    convolution starts at zero, so a fresh model is plain gradient descent
    from the FBP image and the learned correction grows from nothing.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if precond not in PRECONDS:
        raise ValueError(f"precond must be one of {PRECONDS}")
    use_ir, use_im = mode_flags(mode)
    est_channels = est_channels or channels
    from .io import make_rng
    rng = make_rng(seed, 0)
    c = channels
    params = {}
    for k in range(K):
        params[f"k{k}.rho"] = np.array([nn.softplus_inv(RHO_INIT)])
        params[f"k{k}.theta"] = np.array([nn.softplus_inv(THETA_INIT)])
        params[f"k{k}.g1"] = nn.kaiming_uniform(rng, (c, 1, 3, 3))
        params[f"k{k}.g2"] = nn.kaiming_uniform(rng, (c, c, 3, 3))
        params[f"k{k}.h1"] = nn.kaiming_uniform(rng, (c, c, 3, 3))
        params[f"k{k}.h2"] = nn.kaiming_uniform(rng, (1, c, 3, 3))
        if residual:
            params[f"k{k}.h2"][:] = 0.0
    est_rng = make_rng(seed, 1)
    if use_ir:
        params.update(estimator_params(est_rng, est_channels, "ir"))
    if use_im:
        params.update(estimator_params(est_rng, est_channels, "im"))
    return UnrolledModel(K, c, mode, params, precond, residual, est_channels, geometry_id)


# -- estimators ----------------------------------------------------------------

def _estimator_forward(y, p, prefix):
    h = y[None]
    stages = []
    for i in (1, 2, 3):
        c = nn.conv2d(h, p[f"{prefix}.w{i}"])
        n, inv = nn.instance_norm(c)
        stages.append((h, n, inv))
        h = nn.relu(n)
    zmap = nn.conv2d(h, p[f"{prefix}.wh"], p[f"{prefix}.bh"])
    sig = nn.sigmoid(zmap[0].mean(axis=0))
    return sig, (stages, h, zmap.shape)


def _estimator_backward(gsig, sig, cache, p, prefix, grads, need_input):
    stages, h_last, zshape = cache
    gz = gsig * sig * (1.0 - sig)
    gzmap = np.broadcast_to(gz[None, None, :] / zshape[1], zshape)
    gh, gw, gb = nn.conv2d_backward(gzmap, h_last, p[f"{prefix}.wh"])
    grads[f"{prefix}.wh"] += gw
    grads[f"{prefix}.bh"] += gb
    for i in (3, 2, 1):
        h_in, n, inv = stages[i - 1]
        gc = nn.instance_norm_backward(gh * (n > 0), n, inv)
        gh, gw, _ = nn.conv2d_backward(gc, h_in, p[f"{prefix}.w{i}"],
                                       need_x=(i > 1 or need_input))
        grads[f"{prefix}.w{i}"] += gw
    return gh[0] if need_input else None


def estimate_ir(y, model: UnrolledModel) -> np.ndarray:
    """Per-detector response estimate in (0.75, 1.25)."""
    sig, _ = _estimator_forward(np.asarray(y, dtype=np.float64), model.params, "ir")
    return IR_OFFSET + IR_SCALE * sig


def estimate_im(y, model: UnrolledModel) -> np.ndarray:
    """Per-detector validity probability in (0, 1); 1 means a working detector."""
    sig, _ = _estimator_forward(np.asarray(y, dtype=np.float64), model.params, "im")
    return sig


# -- operators -----------------------------------------------------------------

def modified_forward(x, eta, mask, g: FanBeamGeometry, mode: str = "full") -> np.ndarray:
    """Defect-aware projection: ``mask * (-ln eta + A x)`` with the terms a
    mode does not model left out."""
    use_ir, use_im = mode_flags(mode)
    eta = np.asarray(eta, dtype=np.float64)
    if use_ir and np.any(eta <= 0):
        raise ValueError("eta must be positive")
    mask = np.asarray(mask, dtype=np.float64)
    u = get_projector(g).forward(x)
    if use_ir:
        off = -np.log(eta)
        if use_im:
            off[mask == 0] = 0.0  # dead columns read +0.0, as the corruption model writes them
        u = u + off[None, :]
    if use_im:
        u = mask[None, :] * u
    return u


class _Backward:
    """Backward operator B of the gradient step and its transpose."""

    def __init__(self, g: FanBeamGeometry, precond: str):
        self.P = get_projector(g)
        self.precond = precond
        if precond == "adjoint":
            self.scale = 1.0 / self.P.norm_sq()

    def apply(self, q):
        if self.precond == "adjoint":
            return self.P.back(q) * self.scale
        return self.P.fbp(q)

    def transpose(self, r):
        if self.precond == "adjoint":
            return self.P.forward(r) * self.scale
        return self.P.fbp_adjoint(r)


def gradient_step(x_prev, y, eta, mask, rho, g: FanBeamGeometry, mode: str = "full",
                  precond: str = "adjoint") -> np.ndarray:
    """``x - rho * B(m * (A~ x - y))`` with B the (normalized) adjoint by default.

    In the adjoint setting the step is measured in units of ``1/||A||^2``.
    """
    use_ir, use_im = mode_flags(mode)
    res = modified_forward(x_prev, eta, mask, g, mode) - y
    if use_im:
        res = np.asarray(mask, dtype=np.float64)[None, :] * res
    return x_prev - rho * _Backward(g, precond).apply(res)


def proximal_step(r, params: dict, k: int, residual: bool = False) -> np.ndarray:
    """``Ghat_k(soft(G_k(r), theta_k))`` (plus ``r`` when ``residual``)."""
    theta = float(nn.softplus(params[f"k{k}.theta"][0]))
    gf = nn.conv2d(nn.relu(nn.conv2d(r[None], params[f"k{k}.g1"])), params[f"k{k}.g2"])
    z = nn.soft(gf, theta)
    out = nn.conv2d(nn.relu(nn.conv2d(z, params[f"k{k}.h1"])), params[f"k{k}.h2"])[0]
    return out + r if residual else out


def symmetry_residual(r, params: dict, k: int) -> np.ndarray:
    """``Ghat_k(G_k(r)) - r``."""
    gf = nn.conv2d(nn.relu(nn.conv2d(r[None], params[f"k{k}.g1"])), params[f"k{k}.g2"])
    return nn.conv2d(nn.relu(nn.conv2d(gf, params[f"k{k}.h1"])), params[f"k{k}.h2"])[0] - r


# -- unrolled graph ---------------------------------------------------------------

def _run(model: UnrolledModel, y, g: FanBeamGeometry, binarize: bool, keep: bool):
    """Forward pass; with ``keep`` every intermediate needed for backprop is stored."""
    P = get_projector(g)
    B = _Backward(g, model.precond)
    p = model.params
    use_ir, use_im = model.uses_ir, model.uses_im
    st = {"y": y}
    nd = g.n_detectors
    if use_ir:
        sig_ir, st["ir_cache"] = _estimator_forward(y, p, "ir")
        st["sig_ir"] = sig_ir
        eta = IR_OFFSET + IR_SCALE * sig_ir
    else:
        eta = np.ones(nd)
    if use_im:
        sig_im, st["im_cache"] = _estimator_forward(y, p, "im")
        st["sig_im"] = sig_im
        m = (sig_im >= 0.5).astype(np.float64) if binarize else sig_im
    else:
        m = np.ones(nd)
    st["eta"], st["m"] = eta, m
    off = -np.log(eta)
    x = P.fbp(y)
    iters = []
    for k in range(model.K):
        rho = model.rho(k)
        theta = model.theta(k)
        s = P.forward(x)
        u = s + off[None, :] if use_ir else s
        pred = m[None, :] * u if use_im else u
        res = pred - y
        q = m[None, :] * res if use_im else res
        bq = B.apply(q)
        r = x - rho * bq
        a1 = nn.conv2d(r[None], p[f"k{k}.g1"])
        b1 = nn.relu(a1)
        gf = nn.conv2d(b1, p[f"k{k}.g2"])
        z = nn.soft(gf, theta)
        c1 = nn.conv2d(z, p[f"k{k}.h1"])
        d1 = nn.relu(c1)
        x_new = nn.conv2d(d1, p[f"k{k}.h2"])[0]
        if model.residual:
            x_new = x_new + r
        it = {"x": x, "r": r, "theta": theta, "rho": rho}
        if keep:
            c1s = nn.conv2d(gf, p[f"k{k}.h1"])
            d1s = nn.relu(c1s)
            e = nn.conv2d(d1s, p[f"k{k}.h2"])[0] - r
            it.update(u=u, res=res, bq=bq, a1=a1, b1=b1, gf=gf, z=z, c1=c1,
                      d1=d1, c1s=c1s, d1s=d1s, e=e)
        iters.append(it)
        x = x_new
    st["iters"] = iters
    st["x_out"] = x
    return st


def unrolled_reconstruct(y, g: FanBeamGeometry, model: UnrolledModel):
    """Reconstruct from a (possibly defective) sinogram.

    Returns ``(x_hat, eta_hat, mask_hat)``; the mask is binarized at 0.5.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != g.sino_shape:
        raise ValueError(f"sinogram shape {y.shape} does not match geometry {g.sino_shape}")
    st = _run(model, y, g, binarize=True, keep=False)
    return st["x_out"], st["eta"], st["m"]


def compute_loss(model: UnrolledModel, y, g: FanBeamGeometry, x_true, eta_true, mask_true,
                 lam: float = LAMBDA_CONS, need_grad: bool = True):
    """Training loss for one sample and (optionally) its gradients.

    ``MSE(x) + MSE(eta) + MSE(mask) + lam * sum_k mean(|Ghat_k(G_k(r_k)) - r_k|^2)``,
    where the response terms are present only for the estimators the mode
    uses. Returns ``(loss, grads, parts)``; ``grads`` maps every parameter
    name (and ``"y"``, the input sinogram) to its gradient.
    """
    y = np.asarray(y, dtype=np.float64)
    st = _run(model, y, g, binarize=False, keep=True)
    use_ir, use_im = model.uses_ir, model.uses_im
    x_out = st["x_out"]
    parts = {"image": float(((x_out - x_true) ** 2).mean())}
    if use_ir:
        parts["ir"] = float(((st["eta"] - eta_true) ** 2).mean())
    if use_im:
        parts["im"] = float(((st["m"] - mask_true) ** 2).mean())
    parts["cons"] = float(sum((it["e"] ** 2).mean() for it in st["iters"]))
    loss = parts["image"] + parts.get("ir", 0.0) + parts.get("im", 0.0) + lam * parts["cons"]
    if not need_grad:
        return loss, None, parts
    return loss, _backward(model, g, st, x_true, eta_true, mask_true, lam), parts


def _backward(model, g, st, x_true, eta_true, mask_true, lam):
    P = get_projector(g)
    B = _Backward(g, model.precond)
    p = model.params
    use_ir, use_im = model.uses_ir, model.uses_im
    grads = {name: np.zeros_like(v) for name, v in p.items()}
    y, eta, m = st["y"], st["eta"], st["m"]
    gy = np.zeros_like(y)
    geta = np.zeros_like(eta)
    gm = np.zeros_like(m)
    gx = 2.0 * (st["x_out"] - x_true) / x_true.size
    for k in reversed(range(model.K)):
        it = st["iters"][k]
        r, rho, theta = it["r"], it["rho"], it["theta"]
        # proximal map
        gr = gx.copy() if model.residual else np.zeros_like(r)
        gd1, gw, _ = nn.conv2d_backward(gx[None], it["d1"], p[f"k{k}.h2"])
        grads[f"k{k}.h2"] += gw
        gz, gw, _ = nn.conv2d_backward(nn.relu_backward(gd1, it["c1"]), it["z"], p[f"k{k}.h1"])
        grads[f"k{k}.h1"] += gw
        ggf, gtheta = nn.soft_backward(gz, it["gf"], theta)
        # symmetry constraint
        ge = lam * 2.0 * it["e"] / it["e"].size
        gr -= ge
        gd1s, gw, _ = nn.conv2d_backward(ge[None], it["d1s"], p[f"k{k}.h2"])
        grads[f"k{k}.h2"] += gw
        ggf_s, gw, _ = nn.conv2d_backward(nn.relu_backward(gd1s, it["c1s"]), it["gf"], p[f"k{k}.h1"])
        grads[f"k{k}.h1"] += gw
        ggf += ggf_s
        gb1, gw, _ = nn.conv2d_backward(ggf, it["b1"], p[f"k{k}.g2"])
        grads[f"k{k}.g2"] += gw
        gr0, gw, _ = nn.conv2d_backward(nn.relu_backward(gb1, it["a1"]), r[None], p[f"k{k}.g1"])
        grads[f"k{k}.g1"] += gw
        gr += gr0[0]
        grads[f"k{k}.theta"] += gtheta * nn.sigmoid(p[f"k{k}.theta"])
        # gradient step r = x - rho * B(q)
        gx = gr.copy()
        grads[f"k{k}.rho"] += -float((gr * it["bq"]).sum()) * nn.sigmoid(p[f"k{k}.rho"])
        gq = -rho * B.transpose(gr)
        if use_im:
            gm += (gq * it["res"]).sum(axis=0)
            gres = gq * m[None, :]
        else:
            gres = gq
        gy -= gres
        if use_im:
            gm += (gres * it["u"]).sum(axis=0)
            gu = gres * m[None, :]
        else:
            gu = gres
        if use_ir:
            geta -= gu.sum(axis=0) / eta
        gx += P.back(gu)
    gy += P.fbp_adjoint(gx)
    if use_ir:
        geta += 2.0 * (eta - eta_true) / eta.size
        gy += _estimator_backward(IR_SCALE * geta, st["sig_ir"], st["ir_cache"], p, "ir",
                                  grads, need_input=True)
    if use_im:
        gm += 2.0 * (m - mask_true) / m.size
        gy += _estimator_backward(gm, st["sig_im"], st["im_cache"], p, "im", grads,
                                  need_input=True)
    grads["y"] = gy
    return grads
