"""``ringct`` command line: corpus generation, reconstruction, training, scoring.

Every subcommand accepts ``--config run.json``. Its keys are the option
names (dashes or underscores); flags given on the command line win. The
effective configuration is written next to the output.

BLAS is pinned to one thread; ``--threads`` sizes a per-sample worker pool,
so results do not depend on it.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import baselines, io
from .evaluate import (Reconstructor, bench, bench_table, evaluate, models_by_mode,
                       parse_methods, profile_rows)
from .geometry import geometry_to_dict, resolve_geometry
from .model import MODES, init_model, unrolled_reconstruct
from .physics import DetectorResponse, apply_corruption, sample_response
from .projector import fbp
from .synthesis import (AUGMENTATIONS, CorruptionParams, generate_corpus, load_samples,
                        manifest_geometry, write_corpus)
from .train import TrainConfig, load_checkpoint, save_checkpoint, train

log = logging.getLogger("ringct")

_TC = TrainConfig()

COMMON = {"seed": 0, "threads": None, "geometry": "desk", "out": None}

DEFAULTS = {
    "gen": {"count": 200, "sources": None, "augmentations": AUGMENTATIONS,
            "ir_fraction": 0.75, "im_fraction": 0.02, "name": "manifest.json"},
    "corrupt": {"sino": None, "ir": None, "im": None, "ir_fraction": 0.75,
                "im_fraction": 0.02},
    "fbp": {"sino": None},
    "baseline": {"method": None, "sino": None, "window": 9, "levels": 2, "sigma": 2.0,
                 "wavelet": "db4", "image": False},
    "train": {"manifest": None, "steps": _TC.steps, "lr": _TC.lr, "K": _TC.K,
              "channels": _TC.channels, "est_channels": None, "mode": _TC.mode,
              "fbp_precond": _TC.precond == "fbp", "residual": _TC.residual,
              "lam": _TC.lam, "resume": None, "log_every": _TC.log_every},
    "recon": {"sino": None, "manifest": None, "index": 0, "ckpt": None,
              "method": "synthrar", "estimates": False},
    "eval": {"manifest": None, "methods": "fbp,norm,wavefft", "ckpt": [],
             "data_range": None, "table": None},
    "profile": {"manifest": None, "index": 0, "row": None, "methods": "fbp,norm",
                "ckpt": []},
    "bench": {"manifest": None, "count": 4, "methods": "fbp,norm,wavefft,synthrar:full",
              "ckpt": [], "repeats": 3},
}


class CliError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--threads", type=int, help="worker threads (default: logical cores)")
    common.add_argument("--geometry", help="preset id, e.g. desk, g1, g1/8 (default desk)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--config", help="JSON file with option values; flags win")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    p = argparse.ArgumentParser(prog="ringct", description="Ring artifact reduction for fan-beam CT.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_):
        return sub.add_parser(name, help=help_, parents=[common], argument_default=S)

    a = add("gen", "build a synthetic training corpus")
    a.add_argument("--count", type=int, help="number of samples (default 200)")
    a.add_argument("--sources", help="directory of PGM source images (default: procedural)")
    a.add_argument("--augmentations", type=int, help="samples per source image (default 10)")
    a.add_argument("--ir-fraction", type=float)
    a.add_argument("--im-fraction", type=float)
    a.add_argument("--name", help="manifest file name (default manifest.json)")

    a = add("corrupt", "apply a detector response to a sinogram")
    a.add_argument("sino", nargs="?", help="SRF1 sinogram")
    a.add_argument("--ir", help="1xD SRF1 gain vector (default: sampled from --seed)")
    a.add_argument("--im", help="1xD SRF1 validity mask (default: sampled from --seed)")
    a.add_argument("--ir-fraction", type=float)
    a.add_argument("--im-fraction", type=float)

    a = add("fbp", "filtered back-projection of a sinogram")
    a.add_argument("sino", nargs="?")

    a = add("baseline", "classical stripe correction of a sinogram")
    a.add_argument("method", nargs="?", choices=["norm", "wavefft"])
    a.add_argument("sino", nargs="?")
    a.add_argument("--window", type=int, help="norm: smoothing window, odd (default 9)")
    a.add_argument("--levels", type=int, help="wavefft: decomposition levels (default 2)")
    a.add_argument("--sigma", type=float, help="wavefft: damping width (default 2)")
    a.add_argument("--wavelet", help="wavefft: haar, db2 or db4 (default db4)")
    a.add_argument("--image", action="store_true", help="write the FBP of the corrected sinogram")

    a = add("train", "train the unrolled network")
    a.add_argument("--manifest")
    a.add_argument("--steps", type=int)
    a.add_argument("--lr", type=float)
    a.add_argument("--K", type=int, help="unrolled iterations")
    a.add_argument("--channels", type=int)
    a.add_argument("--est-channels", type=int)
    a.add_argument("--mode", choices=MODES)
    a.add_argument("--fbp-precond", action="store_true",
                   help="use the filtered backprojection as the backward operator")
    a.add_argument("--no-residual", dest="residual", action="store_false",
                   help="proximal output replaces the iterate instead of correcting it")
    a.add_argument("--lam", type=float, help="symmetry loss weight (default 0.01)")
    a.add_argument("--resume", help="checkpoint to continue from")
    a.add_argument("--log-every", type=int)

    a = add("recon", "reconstruct one sinogram")
    a.add_argument("sino", nargs="?", help="SRF1 sinogram (or use --manifest/--index)")
    a.add_argument("--manifest")
    a.add_argument("--index", type=int)
    a.add_argument("--ckpt")
    a.add_argument("--method", help="fbp, norm, wavefft or synthrar[:mode] (default synthrar)")
    a.add_argument("--estimates", action="store_true", help="also write the eta and mask estimates")

    a = add("eval", "score methods on a corpus")
    a.add_argument("--manifest")
    a.add_argument("--methods")
    a.add_argument("--ckpt", action="append", help="checkpoint (repeat for several modes)")
    a.add_argument("--data-range", type=float, help="fixed HU range for PSNR/SSIM")
    a.add_argument("--table", help="also write the mean (std) table here")

    a = add("profile", "dump one image row in HU as CSV")
    a.add_argument("--manifest")
    a.add_argument("--index", type=int)
    a.add_argument("--row", type=int)
    a.add_argument("--methods")
    a.add_argument("--ckpt", action="append")

    a = add("bench", "time each method")
    a.add_argument("--manifest")
    a.add_argument("--count", type=int, help="synthetic samples when no manifest (default 4)")
    a.add_argument("--methods")
    a.add_argument("--ckpt", action="append")
    a.add_argument("--repeats", type=int)
    return p


def effective_config(command: str, ns: argparse.Namespace) -> dict:
    """Defaults, then the JSON config, then explicit flags."""
    cfg = dict(COMMON)
    cfg.update(DEFAULTS[command])
    given = {k: v for k, v in vars(ns).items() if k not in ("command", "config", "verbose")}
    path = getattr(ns, "config", None)
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise CliError(f"cannot read config {path}: {e}") from e
        if not isinstance(doc, dict):
            raise CliError(f"config {path} must hold a JSON object")
        doc = {k.replace("-", "_"): v for k, v in doc.items()}
        unknown = sorted(set(doc) - set(cfg))
        if unknown:
            raise CliError(f"unknown config keys for {command}: {', '.join(unknown)}")
        cfg.update(doc)
    cfg.update(given)
    if cfg["threads"] is None:
        cfg["threads"] = os.cpu_count() or 1
    if cfg["threads"] < 1:
        raise CliError("--threads must be >= 1")
    return cfg


def _echo(cfg: dict, out: Path, is_dir: bool) -> None:
    dest = out / "config.json" if is_dir else out.with_name(out.name + ".config.json")
    doc = dict(cfg)
    if not isinstance(doc["geometry"], str):
        doc["geometry"] = geometry_to_dict(resolve_geometry(doc["geometry"]))
    dest.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _need(cfg, *keys):
    for k in keys:
        if cfg.get(k) is None:
            raise CliError(f"missing required option --{k.replace('_', '-')}")


def _out(cfg) -> Path:
    _need(cfg, "out")
    return Path(cfg["out"])


def _geometry(cfg):
    try:
        return resolve_geometry(cfg["geometry"])
    except (KeyError, TypeError) as e:
        raise CliError(str(e).strip("'\"")) from e


def _load_models(paths):
    return [load_checkpoint(p)[0] for p in paths or []]


def _read_sino(path, g):
    s = io.read_raster(path)
    if s.shape != g.sino_shape:
        raise CliError(f"{path}: sinogram is {s.shape[0]}x{s.shape[1]}, geometry "
                       f"{g.name} expects {g.sino_shape[0]}x{g.sino_shape[1]}")
    return s


def _corpus(cfg):
    _need(cfg, "manifest")
    m = io.load_manifest(cfg["manifest"])
    return m, load_samples(m), manifest_geometry(m)


# -- subcommands ------------------------------------------------------------------

def cmd_gen(cfg):
    out = _out(cfg)
    g = _geometry(cfg)
    params = CorruptionParams(cfg["ir_fraction"], cfg["im_fraction"])
    sources = None
    if cfg["sources"]:
        files = sorted(Path(cfg["sources"]).glob("*.pgm"))
        if not files:
            raise CliError(f"no .pgm files in {cfg['sources']}")
        sources = [(str(f), io.read_pgm(f)) for f in files]
    samples = generate_corpus(g, cfg["count"], cfg["seed"], sources, cfg["augmentations"],
                              params, threads=cfg["threads"])
    path = write_corpus(samples, out, params, cfg["name"], g=g)
    _echo(cfg, out, True)
    print(f"wrote {len(samples)} samples to {path}")


def cmd_corrupt(cfg):
    _need(cfg, "sino")
    out = _out(cfg)
    s = io.read_raster(cfg["sino"])
    nd = s.shape[1]
    if (cfg["ir"] is None) != (cfg["im"] is None):
        raise CliError("give both --ir and --im, or neither")
    if cfg["ir"] is not None:
        resp = DetectorResponse(io.read_raster(cfg["ir"]).ravel(), io.read_raster(cfg["im"]).ravel())
    else:
        resp = sample_response(io.make_rng(cfg["seed"], 0), nd, cfg["ir_fraction"],
                               cfg["im_fraction"])
        stem = out.with_suffix("")
        io.write_raster(resp.eta[None, :], f"{stem}_ir.srf")
        io.write_raster(resp.mask[None, :], f"{stem}_im.srf")
    io.write_raster(apply_corruption(s, resp), out)
    _echo(cfg, out, False)


def cmd_fbp(cfg):
    _need(cfg, "sino")
    out = _out(cfg)
    g = _geometry(cfg)
    io.write_raster(fbp(_read_sino(cfg["sino"], g), g), out)
    _echo(cfg, out, False)


def cmd_baseline(cfg):
    _need(cfg, "method", "sino")
    out = _out(cfg)
    s = io.read_raster(cfg["sino"])
    if cfg["image"]:
        s = _read_sino(cfg["sino"], _geometry(cfg))
    if cfg["method"] == "norm":
        c = baselines.norm_correct(s, cfg["window"])
    elif cfg["method"] == "wavefft":
        c = baselines.wavefft_correct(s, cfg["levels"], cfg["sigma"], cfg["wavelet"])
    else:
        raise CliError(f"unknown baseline {cfg['method']!r}")
    if cfg["image"]:
        c = fbp(c, _geometry(cfg))
    io.write_raster(c, out)
    _echo(cfg, out, False)


def cmd_train(cfg):
    out = _out(cfg)
    _, samples, g = _corpus(cfg)
    tc = TrainConfig(steps=cfg["steps"], lr=cfg["lr"], K=cfg["K"], channels=cfg["channels"],
                     est_channels=cfg["est_channels"], mode=cfg["mode"],
                     precond="fbp" if cfg["fbp_precond"] else "adjoint",
                     residual=bool(cfg["residual"]), lam=cfg["lam"], seed=cfg["seed"],
                     log_every=cfg["log_every"])
    model = state = None
    if cfg["resume"]:
        model, state, _ = load_checkpoint(cfg["resume"])
        if model.mode != tc.mode:
            raise CliError(f"checkpoint mode {model.mode!r} differs from --mode {tc.mode!r}")
    model, state = train(samples, tc, g, model, state)
    save_checkpoint(out, model, state, tc)
    with open(out.with_name(out.name + ".loss.csv"), "w") as fh:
        fh.write("step,loss\n")
        for i, v in enumerate(state.losses):
            fh.write(f"{i + 1},{v!r}\n")
    _echo(cfg, out, False)
    n = min(100, len(state.losses))
    if n:
        print(f"trained {state.step} steps; loss {np.mean(state.losses[:n]):.5f} -> "
              f"{np.mean(state.losses[-n:]):.5f}")


def cmd_recon(cfg):
    out = _out(cfg)
    method = parse_methods(cfg["method"])[0]
    if cfg["sino"]:
        g = _geometry(cfg)
        y = _read_sino(cfg["sino"], g)
    elif cfg["manifest"]:
        _, samples, g = _corpus(cfg)
        if not 0 <= cfg["index"] < len(samples):
            raise CliError(f"--index {cfg['index']} outside 0..{len(samples) - 1}")
        y = samples[cfg["index"]].y_corrupt
    else:
        raise CliError("give a sinogram file or --manifest")
    if method.startswith("synthrar"):
        _need(cfg, "ckpt")
        model = load_checkpoint(cfg["ckpt"])[0]
        if ":" in method and model.mode != method.split(":")[1]:
            raise CliError(f"checkpoint mode {model.mode!r} does not match {method}")
        x, eta, mask = unrolled_reconstruct(y, g, model)
        if cfg["estimates"]:
            stem = out.with_suffix("")
            io.write_raster(eta[None, :], f"{stem}_ir.srf")
            io.write_raster(mask[None, :], f"{stem}_im.srf")
    else:
        x = Reconstructor(g)(method, y)
    io.write_raster(x, out)
    _echo(cfg, out, False)


def cmd_eval(cfg):
    _, samples, g = _corpus(cfg)
    models = _load_models(cfg["ckpt"])
    report = evaluate(samples, cfg["methods"], g, models, cfg["data_range"], cfg["threads"])
    text = report.to_csv()
    if cfg["out"]:
        out = Path(cfg["out"])
        out.write_text(text)
        _echo(cfg, out, False)
    else:
        sys.stdout.write(text)
    if cfg["table"]:
        Path(cfg["table"]).write_text(report.table())
    sys.stderr.write(report.table())


def cmd_profile(cfg):
    _need(cfg, "row")
    _, samples, g = _corpus(cfg)
    if not 0 <= cfg["index"] < len(samples):
        raise CliError(f"--index {cfg['index']} outside 0..{len(samples) - 1}")
    recon = Reconstructor(g, models_by_mode(_load_models(cfg["ckpt"])))
    text = profile_rows(samples[cfg["index"]], cfg["methods"], recon, cfg["row"])
    if cfg["out"]:
        Path(cfg["out"]).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_bench(cfg):
    methods = parse_methods(cfg["methods"])
    if cfg["manifest"]:
        _, samples, g = _corpus(cfg)
    else:
        g = _geometry(cfg)
        samples = generate_corpus(g, cfg["count"], cfg["seed"])
    models = _load_models(cfg["ckpt"])
    if not models:
        # timing only: untrained desk-size networks for each requested mode
        modes = {m.split(":")[1] if ":" in m else "full" for m in methods if m.startswith("synthrar")}
        models = [init_model(_TC.K, _TC.channels, mode, cfg["seed"], geometry_id=g.name)
                  for mode in sorted(modes)]
    rows = bench(samples, methods, Reconstructor(g, models_by_mode(models)), cfg["repeats"])
    text = bench_table(rows)
    sys.stdout.write(text)
    if cfg["out"]:
        Path(cfg["out"]).write_text(text)


COMMANDS = {"gen": cmd_gen, "corrupt": cmd_corrupt, "fbp": cmd_fbp, "baseline": cmd_baseline,
            "train": cmd_train, "recon": cmd_recon, "eval": cmd_eval, "profile": cmd_profile,
            "bench": cmd_bench}


def main(argv=None) -> int:
    parser = _parser()
    ns = parser.parse_args(argv)  # exits 2 with usage on bad input
    logging.basicConfig(level=logging.INFO if getattr(ns, "verbose", False) else logging.WARNING,
                        format="%(message)s")
    try:
        cfg = effective_config(ns.command, ns)
        with threadpool_limits(limits=1):
            COMMANDS[ns.command](cfg)
    except (CliError, ValueError, KeyError, OSError, FloatingPointError,
            NotImplementedError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"ringct {ns.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
