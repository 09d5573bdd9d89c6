"""Adam training of the unrolled model and the SRWT checkpoint format.

Checkpoint layout::

    SRWT <version>\\n
    <one line of JSON metadata>\\n
    then, per tensor:  T <name> f64 <ndim> <dims...>\\n  <little-endian payload>
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import io
from .geometry import geometry_preset
from .model import LAMBDA_CONS, UnrolledModel, _run, compute_loss, init_model
from .synthesis import load_samples

log = logging.getLogger(__name__)

SRWT_MAGIC = "SRWT"
SRWT_VERSION = 1


@dataclass
class TrainConfig:
    steps: int = 5000
    lr: float = 1e-3
    K: int = 5
    channels: int = 8
    est_channels: int | None = None
    mode: str = "full"
    precond: str = "adjoint"
    residual: bool = True
    lam: float = LAMBDA_CONS
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    log_every: int = 100
    probe_every: int = 0


@dataclass
class TrainState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    losses: list = field(default_factory=list)
    probe: list = field(default_factory=list)


def adam_update(params: dict, grads: dict, state: TrainState, cfg: TrainConfig) -> None:
    state.step += 1
    t = state.step
    c1 = 1.0 - cfg.beta1 ** t
    c2 = 1.0 - cfg.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        p -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


def _first_nonfinite(model, sample, g) -> str:
    st = _run(model, sample.y_corrupt, g, binarize=False, keep=True)
    for name in ("y", "sig_ir", "sig_im", "eta", "m"):
        if name in st and not np.all(np.isfinite(st[name])):
            return name
    for k, it in enumerate(st["iters"]):
        for name, val in it.items():
            if not np.all(np.isfinite(val)):
                return f"iteration {k}: {name}"
    for name, p in model.params.items():
        if not np.all(np.isfinite(p)):
            return f"parameter {name}"
    return "loss"


def symmetry_probe(model: UnrolledModel, probes, g) -> float:
    """Mean symmetry residual over fixed probe samples."""
    vals = []
    for s in probes:
        st = _run(model, s.y_corrupt, g, binarize=False, keep=True)
        vals.append(np.mean([(it["e"] ** 2).mean() for it in st["iters"]]))
    return float(np.mean(vals))


def train(samples, cfg: TrainConfig, geometry=None, model: UnrolledModel | None = None,
          state: TrainState | None = None, probes=None, callback=None):
    """Train on ``samples`` (list of TrainingSample or a manifest path).

    Batch size 1; the sample order is a seeded permutation per epoch, so a
    fixed seed reproduces the run exactly. Returns ``(model, state)``.
    """
    if not isinstance(samples, list):
        samples = load_samples(samples)
    if not samples:
        raise ValueError("training set is empty")
    g = geometry or geometry_preset(samples[0].geometry_id)
    if model is None:
        model = init_model(cfg.K, cfg.channels, cfg.mode, cfg.seed, cfg.precond,
                           cfg.residual, cfg.est_channels, g.name)
    state = state or TrainState()
    order_rng = io.make_rng(cfg.seed, 2)
    order = []
    t0 = time.perf_counter()
    # replay the permutation stream up to the resume point
    for _ in range(state.step // len(samples)):
        order_rng.permutation(len(samples))
    pos = state.step % len(samples)
    if pos:
        order = list(order_rng.permutation(len(samples)))[pos:]
    while state.step < cfg.steps:
        if not order:
            order = list(order_rng.permutation(len(samples)))
        s = samples[order.pop(0)]
        loss, grads, parts = compute_loss(model, s.y_corrupt, g, s.x_clean,
                                          s.response.eta, s.response.mask, cfg.lam)
        if not math.isfinite(loss):
            where = _first_nonfinite(model, s, g)
            raise FloatingPointError(f"non-finite loss at step {state.step}; "
                                     f"first non-finite tensor: {where}")
        adam_update(model.params, grads, state, cfg)
        state.losses.append(loss)
        if cfg.probe_every and probes and state.step % cfg.probe_every == 0:
            state.probe.append(symmetry_probe(model, probes, g))
        if cfg.log_every and state.step % cfg.log_every == 0:
            recent = np.mean(state.losses[-cfg.log_every:])
            log.info("step %d loss %.5f (%.1fs)", state.step, recent,
                     time.perf_counter() - t0)
        if callback is not None:
            callback(state, parts)
    return model, state


# -- checkpoints -------------------------------------------------------------------

def _tensor_block(name: str, arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    dims = " ".join(str(d) for d in arr.shape)
    return f"T {name} f64 {arr.ndim} {dims}\n".encode("ascii") + arr.tobytes()


def save_checkpoint(path, model: UnrolledModel, state: TrainState | None = None,
                    cfg: TrainConfig | None = None) -> None:
    meta = {
        "geometry_id": model.geometry_id, "mode": model.mode, "K": model.K,
        "channels": model.channels, "est_channels": model.est_channels,
        "precond": model.precond, "residual": model.residual,
        "step": state.step if state else 0,
        "config": asdict(cfg) if cfg else None,
    }
    blocks = [f"{SRWT_MAGIC} {SRWT_VERSION}\n".encode("ascii"),
              (json.dumps(meta, sort_keys=True) + "\n").encode("ascii")]
    for name in sorted(model.params):
        blocks.append(_tensor_block(name, model.params[name]))
    if state is not None:
        for name in sorted(state.m):
            blocks.append(_tensor_block(f"adam.m.{name}", state.m[name]))
            blocks.append(_tensor_block(f"adam.v.{name}", state.v[name]))
    with open(path, "wb") as fh:
        fh.write(b"".join(blocks))


def load_checkpoint(path):
    """Returns ``(model, state, config_dict)``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    nl = blob.find(b"\n")
    head = blob[:nl].decode("ascii").split()
    if len(head) != 2 or head[0] != SRWT_MAGIC:
        raise io.FormatError(f"{path}: not an SRWT checkpoint")
    if int(head[1]) != SRWT_VERSION:
        raise io.FormatError(f"{path}: unsupported SRWT version {head[1]}")
    nl2 = blob.find(b"\n", nl + 1)
    meta = json.loads(blob[nl + 1:nl2])
    pos = nl2 + 1
    tensors = {}
    while pos < len(blob):
        end = blob.find(b"\n", pos)
        fields = blob[pos:end].decode("ascii").split()
        if len(fields) < 4 or fields[0] != "T" or fields[2] != "f64":
            raise io.FormatError(f"{path}: bad tensor header at byte {pos}")
        ndim = int(fields[3])
        shape = tuple(int(d) for d in fields[4:4 + ndim])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        start = end + 1
        if start + nbytes > len(blob):
            raise io.FormatError(f"{path}: tensor {fields[1]} truncated")
        tensors[fields[1]] = np.frombuffer(blob[start:start + nbytes], dtype="<f8") \
            .reshape(shape).astype(np.float64)
        pos = start + nbytes
    params = {k: v for k, v in tensors.items() if not k.startswith("adam.")}
    model = UnrolledModel(meta["K"], meta["channels"], meta["mode"], params,
                          meta["precond"], meta["residual"], meta["est_channels"],
                          meta["geometry_id"])
    state = TrainState(step=meta["step"])
    for k, v in tensors.items():
        if k.startswith("adam.m."):
            state.m[k[7:]] = v
        elif k.startswith("adam.v."):
            state.v[k[7:]] = v
    return model, state, meta.get("config")
