"""Method comparison: reconstruct, score in HU inside the inscribed circle, tabulate.

Method labels are ``fbp``, ``norm``, ``wavefft`` and ``synthrar[:mode]``;
the last needs a trained checkpoint.
"""
from __future__ import annotations

import csv
import io as _io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .geometry import FanBeamGeometry, geometry_preset
from .metrics import hu_metrics, mu_to_hu
from .model import MODES, UnrolledModel, estimate_im, estimate_ir, unrolled_reconstruct
from .physics import circle_mask
from .projector import fbp

CLASSICAL = ("fbp", "norm", "wavefft")
COLUMNS = ("sample_id", "method", "mae_hu", "psnr_db", "ssim")


def parse_methods(labels) -> list[str]:
    """Split and validate a comma-separated method list."""
    items = labels.split(",") if isinstance(labels, str) else list(labels)
    out = []
    for m in (s.strip() for s in items):
        if not m:
            continue
        if m in CLASSICAL or m == "synthrar":
            out.append(m)
        elif m.startswith("synthrar:") and m.split(":", 1)[1] in MODES:
            out.append(m)
        else:
            raise ValueError(f"unknown method {m!r}")
    if not out:
        raise ValueError("no methods given")
    return out


@dataclass
class Reconstructor:
    """Maps method labels to sinogram -> image functions."""

    g: FanBeamGeometry
    models: dict = field(default_factory=dict)
    norm_window: int = 9
    wave_levels: int = 2
    wave_sigma: float = 2.0
    wavelet: str = "db4"

    def model_for(self, method: str) -> UnrolledModel:
        mode = method.split(":", 1)[1] if ":" in method else None
        if not self.models:
            raise ValueError(f"method {method!r} needs a checkpoint (--ckpt)")
        if mode is None:
            if len(self.models) > 1:
                raise ValueError("several checkpoints loaded; name the mode as synthrar:<mode>")
            return next(iter(self.models.values()))
        if mode not in self.models:
            raise ValueError(f"no checkpoint with mode {mode!r} (have {sorted(self.models)})")
        return self.models[mode]

    def __call__(self, method: str, y) -> np.ndarray:
        if method == "fbp":
            return fbp(y, self.g)
        if method == "norm":
            return fbp(baselines.norm_correct(y, self.norm_window), self.g)
        if method == "wavefft":
            return fbp(baselines.wavefft_correct(y, self.wave_levels, self.wave_sigma,
                                                 self.wavelet), self.g)
        return unrolled_reconstruct(y, self.g, self.model_for(method))[0]


def models_by_mode(models) -> dict:
    out = {}
    for m in models:
        if m.mode in out:
            raise ValueError(f"two checkpoints with mode {m.mode!r}")
        out[m.mode] = m
    return out


@dataclass
class MetricReport:
    rows: list
    geometry_id: str = ""

    def methods(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r["method"] not in seen:
                seen.append(r["method"])
        return seen

    def values(self, method: str, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.rows if r["method"] == method], dtype=float)

    def summary(self) -> dict:
        """``{method: {metric: (mean, std)}}``; infinite PSNRs propagate."""
        out = {}
        for m in self.methods():
            out[m] = {}
            for key in COLUMNS[2:]:
                v = self.values(m, key)
                with np.errstate(invalid="ignore"):  # inf - inf in the std
                    out[m][key] = (float(v.mean()), float(v.std()))
        return out

    def to_csv(self) -> str:
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([r["sample_id"], r["method"]] + [_fmt(r[k]) for k in COLUMNS[2:]])
        return buf.getvalue()

    def table(self) -> str:
        """Aligned ``mean (std)`` table, one line per method."""
        head = ["method", "MAE [HU]", "PSNR [dB]", "SSIM"]
        lines = [head]
        for m, stats in self.summary().items():
            lines.append([m] + [f"{_fmt(mu, 4)} ({_fmt(sd, 4)})"
                                for mu, sd in (stats[k] for k in COLUMNS[2:])])
        widths = [max(len(row[i]) for row in lines) for i in range(len(head))]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()
                         for row in lines) + "\n"


def _fmt(v, digits: int = 6) -> str:
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return f"{v:.{digits}g}" if isinstance(v, float) else str(v)


def read_report_csv(text: str) -> MetricReport:
    rows = []
    for r in csv.DictReader(_io.StringIO(text)):
        rows.append({"sample_id": r["sample_id"], "method": r["method"],
                     **{k: float(r[k]) for k in COLUMNS[2:]}})
    return MetricReport(rows)


def evaluate(samples, methods, g: FanBeamGeometry | None = None, models=(),
             data_range: float | None = None, threads: int = 1,
             recon: Reconstructor | None = None) -> MetricReport:
    """Score every method on every sample.

    ``samples`` are TrainingSample objects; their ``x_clean`` is the reference.
    Rows come out in sample order, then method order, whatever ``threads`` is.
    """
    methods = parse_methods(methods)
    if not samples:
        raise ValueError("no samples to evaluate")
    g = g or geometry_preset(samples[0].geometry_id)
    recon = recon or Reconstructor(g, models_by_mode(models))
    for m in methods:
        if m.startswith("synthrar"):
            recon.model_for(m)  # fail before doing any work
    region = circle_mask(g.image_size)

    def one(i):
        s = samples[i]
        sid = s.meta.get("sample_id", f"s{i:05d}")
        rows = []
        for m in methods:
            x = recon(m, s.y_corrupt)
            rows.append({"sample_id": sid, "method": m,
                         **hu_metrics(x, s.x_clean, region, data_range)})
        return rows

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            chunks = list(pool.map(one, range(len(samples))))
    else:
        chunks = [one(i) for i in range(len(samples))]
    return MetricReport([r for c in chunks for r in c], g.name)


def fov_detectors(g: FanBeamGeometry) -> np.ndarray:
    """Detectors whose rays cross the inscribed field-of-view circle.

    Outside it every ray sees only air, so a dead detector and a valid one
    with unit gain both read zero and cannot be told apart.
    """
    return g.detector_iso_distance() < g.fov_radius


def estimator_scores(samples, model: UnrolledModel, g: FanBeamGeometry,
                     threshold: float = 0.5) -> dict:
    """Response-estimator accuracy against the generator's ground truth.

    Returns the mean ``|eta_hat - eta|`` and the dead-detector F1 (positive
    class: mask 0), each over all detectors and over the in-FOV detectors.
    Keys for an estimator the model's mode lacks are omitted.
    """
    fov = fov_detectors(g)
    out = {}
    if model.uses_ir:
        err = np.array([np.abs(estimate_ir(s.y_corrupt, model) - s.response.eta)
                        for s in samples])
        out["ir_mae"] = float(err.mean())
        out["ir_mae_fov"] = float(err[:, fov].mean())
    if model.uses_im:
        counts = np.zeros((2, 3))
        for s in samples:
            pred = estimate_im(s.y_corrupt, model) < threshold
            true = s.response.mask == 0
            for row, sel in enumerate((slice(None), fov)):
                p, t = pred[sel], true[sel]
                counts[row] += [(p & t).sum(), (p & ~t).sum(), (~p & t).sum()]
        for row, key in enumerate(("im_f1", "im_f1_fov")):
            tp, fp, fn = counts[row]
            out[key] = float(2 * tp / (2 * tp + fp + fn)) if tp + fp + fn else 1.0
        out["im_counts_fov"] = tuple(int(c) for c in counts[1])
    return out


def bench(samples, methods, recon: Reconstructor, repeats: int = 3) -> list[dict]:
    """Median wall-clock milliseconds per reconstruction for each method."""
    out = []
    for m in parse_methods(methods):
        recon(m, samples[0].y_corrupt)  # warm caches (projector matrices)
        times = []
        for _ in range(repeats):
            for s in samples:
                t0 = time.perf_counter()
                recon(m, s.y_corrupt)
                times.append(1e3 * (time.perf_counter() - t0))
        out.append({"method": m, "median_ms": float(np.median(times)),
                    "mean_ms": float(np.mean(times)), "runs": len(times)})
    return out


def bench_table(rows) -> str:
    lines = [f"{'method':<16}{'median ms':>12}{'mean ms':>12}{'runs':>7}"]
    for r in rows:
        lines.append(f"{r['method']:<16}{r['median_ms']:>12.3f}{r['mean_ms']:>12.3f}{r['runs']:>7d}")
    return "\n".join(lines) + "\n"


def profile_rows(sample, methods, recon: Reconstructor, row: int) -> str:
    """CSV of one image row in HU: ground truth plus each method."""
    n = sample.x_clean.shape[0]
    if not 0 <= row < n:
        raise ValueError(f"row {row} outside 0..{n - 1}")
    methods = parse_methods(methods)
    cols = [mu_to_hu(sample.x_clean[row])]
    for m in methods:
        cols.append(mu_to_hu(recon(m, sample.y_corrupt)[row]))
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["col", "truth"] + methods)
    for j in range(n):
        w.writerow([j] + [f"{c[j]:.6g}" for c in cols])
    return buf.getvalue()
