"""Synthetic training pairs: clean image, corrupted sinogram, defect truth."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .geometry import (PRESET_IDS, FanBeamGeometry, geometry_preset, geometry_to_dict,
                       resolve_geometry)
from .physics import (IR_RANGE, MU_RANGE, DetectorResponse, apply_corruption,
                      make_ct_like, sample_response)
from .phantoms import random_texture
from .projector import forward_project

AUGMENTATIONS = 10


@dataclass
class CorruptionParams:
    ir_fraction: float = 0.75
    im_fraction: float = 0.02
    ir_range: tuple[float, float] = IR_RANGE
    mu_range: tuple[float, float] = MU_RANGE

    def to_dict(self) -> dict:
        return {"ir_fraction": self.ir_fraction, "im_fraction": self.im_fraction,
                "ir_range": list(self.ir_range), "mu_range": list(self.mu_range)}

    @classmethod
    def from_dict(cls, d: dict) -> "CorruptionParams":
        return cls(float(d["ir_fraction"]), float(d["im_fraction"]),
                   tuple(d["ir_range"]), tuple(d["mu_range"]))


@dataclass
class TrainingSample:
    x_clean: np.ndarray
    y_corrupt: np.ndarray
    response: DetectorResponse
    geometry_id: str
    seed: int
    stream: int = 0
    source: str = ""
    meta: dict = field(default_factory=dict)


def generate_pair(gray, g: FanBeamGeometry, seed: int, stream: int = 0,
                  params: CorruptionParams | None = None, source: str = "") -> TrainingSample:
    """One augmentation of ``gray``; fully determined by ``(seed, stream)``."""
    params = params or CorruptionParams()
    rng = io.make_rng(seed, stream)
    x = make_ct_like(gray, g.image_size, rng, params.mu_range)
    response = sample_response(rng, g.n_detectors, params.ir_fraction,
                               params.im_fraction, *params.ir_range)
    y = apply_corruption(forward_project(x, g), response)
    return TrainingSample(x, y, response, g.name, seed, stream, source)


def texture_source(seed: int, index: int, size: int) -> np.ndarray:
    """Procedural grayscale source image number ``index``.

    Uses a stream range disjoint from augmentation streams.
    """
    return random_texture(size, io.make_rng(seed, 1_000_000_000 + index))


def generate_corpus(g: FanBeamGeometry, count: int, seed: int,
                    sources=None, augmentations: int = AUGMENTATIONS,
                    params: CorruptionParams | None = None,
                    threads: int = 1) -> list[TrainingSample]:
    """``count`` samples; source ``i // augmentations`` with its own stream per
    augmentation. ``sources`` is a list of (label, gray) pairs; when omitted
    procedural textures are used."""
    params = params or CorruptionParams()

    def one(k: int) -> TrainingSample:
        src_idx = k // augmentations
        if sources is None:
            label = f"texture:{src_idx}"
            gray = texture_source(seed, src_idx, 2 * g.image_size)
        else:
            label, gray = sources[src_idx % len(sources)]
        return generate_pair(gray, g, seed, stream=k, params=params, source=label)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, range(count)))
    return [one(k) for k in range(count)]


def manifest_geometry(manifest: io.DatasetManifest) -> FanBeamGeometry:
    """Geometry of a corpus: the inline block when present, else the preset id."""
    if "geometry" in manifest.params:
        return resolve_geometry(dict(manifest.params["geometry"]))
    return geometry_preset(manifest.geometry_id)


def write_corpus(samples: list[TrainingSample], out_dir, params: CorruptionParams,
                 name: str = "manifest.json", g: FanBeamGeometry | None = None) -> Path:
    """Write SRF1 rasters for every sample plus a JSON manifest.

    Geometries that are not presets are stored inline in the manifest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not samples:
        raise ValueError("no samples to write")
    entries = []
    for i, s in enumerate(samples):
        sid = f"s{i:05d}"
        files = {}
        for key, arr in (("x", s.x_clean), ("y", s.y_corrupt),
                         ("ir", s.response.eta[None, :]), ("im", s.response.mask[None, :])):
            rel = f"{sid}_{key}.srf"
            io.write_raster(arr, out / rel)
            files[key] = rel
        entries.append(io.SampleEntry(sid, s.source, s.seed, s.stream, **files))
    meta = params.to_dict()
    if g is not None and g.name.split("/")[0] not in PRESET_IDS:
        meta["geometry"] = geometry_to_dict(g)
    manifest = io.DatasetManifest(samples[0].geometry_id, meta, entries)
    path = out / name
    io.save_manifest(manifest, path)
    return path


def load_samples(manifest) -> list[TrainingSample]:
    """Read every sample listed in a manifest (path or loaded manifest)."""
    if not isinstance(manifest, io.DatasetManifest):
        manifest = io.load_manifest(manifest)
    out = []
    for e in manifest.samples:
        eta = io.read_raster(manifest.resolve(e.ir))[0]
        mask = io.read_raster(manifest.resolve(e.im))[0]
        out.append(TrainingSample(
            io.read_raster(manifest.resolve(e.x)),
            io.read_raster(manifest.resolve(e.y)),
            DetectorResponse(eta, mask), manifest.geometry_id, e.seed, e.stream,
            e.source, meta={"sample_id": e.sample_id}))
    return out


def replay(manifest, index: int, sources=None) -> TrainingSample:
    """Regenerate sample ``index`` of a manifest from its recorded seed."""
    if not isinstance(manifest, io.DatasetManifest):
        manifest = io.load_manifest(manifest)
    e = manifest.samples[index]
    g = manifest_geometry(manifest)
    params = CorruptionParams.from_dict(manifest.params)
    if e.source.startswith("texture:"):
        gray = texture_source(e.seed, int(e.source.split(":")[1]), 2 * g.image_size)
    elif sources is not None:
        gray = dict(sources)[e.source]
    else:
        gray = io.read_pgm(e.source)
    return generate_pair(gray, g, e.seed, e.stream, params, e.source)
