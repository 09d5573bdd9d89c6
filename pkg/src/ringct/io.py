"""Raster files, PGM ingestion, seeded random streams and dataset manifests.

Grids are plain 2-D ``float64`` numpy arrays in memory. On disk they are
stored in the SRF1 format: a single ASCII header line
``SRF1 f32 2 <rows> <cols>\\n`` followed by ``rows * cols`` little-endian
float32 values in row-major order.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

SRF_MAGIC = "SRF1"


class FormatError(ValueError):
    """Raised when a file does not follow the expected layout."""


def as_grid(data) -> np.ndarray:
    """Return ``data`` as a finite, C-contiguous 2-D float64 array (a copy)."""
    arr = np.array(data, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"grid dimensions must be >= 1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("grid contains NaN or Inf")
    return np.ascontiguousarray(arr)


def encode_raster(grid) -> bytes:
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {arr.shape}")
    rows, cols = arr.shape
    header = f"{SRF_MAGIC} f32 2 {rows} {cols}\n".encode("ascii")
    return header + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_raster(blob: bytes, source="<bytes>") -> np.ndarray:
    nl = blob.find(b"\n")
    if nl < 0:
        raise FormatError(f"{source}: missing header line")
    try:
        fields = blob[:nl].decode("ascii").split()
    except UnicodeDecodeError as exc:
        raise FormatError(f"{source}: header is not ASCII") from exc
    if len(fields) != 5:
        raise FormatError(f"{source}: header must have 5 fields, got {len(fields)}")
    magic, dtype, ndim, rows, cols = fields
    if magic != SRF_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}, expected {SRF_MAGIC!r}")
    if dtype != "f32":
        raise FormatError(f"{source}: unsupported dtype {dtype!r}")
    if ndim != "2":
        raise FormatError(f"{source}: ndim must be 2, got {ndim!r}")
    try:
        rows, cols = int(rows), int(cols)
    except ValueError as exc:
        raise FormatError(f"{source}: rows/cols must be integers") from exc
    if rows < 1:
        raise FormatError(f"{source}: rows must be >= 1, got {rows}")
    if cols < 1:
        raise FormatError(f"{source}: cols must be >= 1, got {cols}")
    payload = blob[nl + 1:]
    need = rows * cols * 4
    if len(payload) < need:
        raise FormatError(f"{source}: payload shorter than header dims "
                          f"({len(payload)} < {need} bytes)")
    data = np.frombuffer(payload[:need], dtype="<f4").reshape(rows, cols)
    return data.astype(np.float64)


def write_raster(grid, path) -> None:
    """Write a 2-D grid as an SRF1 file."""
    blob = encode_raster(grid)
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise OSError(f"cannot write raster {path}: {exc}") from exc


def read_raster(path) -> np.ndarray:
    """Read an SRF1 file back into a float64 grid."""
    with open(path, "rb") as fh:
        blob = fh.read()
    return decode_raster(blob, source=str(path))


def _pgm_tokens(blob: bytes, count: int, pos: int):
    """Read ``count`` whitespace separated header tokens, skipping comments."""
    tokens = []
    n = len(blob)
    while len(tokens) < count:
        while pos < n and blob[pos:pos + 1].isspace():
            pos += 1
        if pos < n and blob[pos:pos + 1] == b"#":
            while pos < n and blob[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(blob[start:pos])
    return tokens, pos


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM image and scale it to [0, 1] by ``maxval``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:2] != b"P5":
        raise FormatError(f"{path}: magic must be P5, got {blob[:2]!r}")
    (w, h, maxval), pos = _pgm_tokens(blob, 3, 2)
    try:
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise FormatError(f"{path}: non-integer PGM header field") from exc
    if width < 1 or height < 1:
        raise FormatError(f"{path}: image dimensions must be >= 1")
    if maxval < 1 or maxval > 65535:
        raise FormatError(f"{path}: maxval must be in [1, 65535], got {maxval}")
    pos += 1  # single whitespace byte before raster
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    raw = blob[pos:pos + need]
    if len(raw) < need:
        raise FormatError(f"{path}: pixel data shorter than header dims")
    pixels = np.frombuffer(raw, dtype=dtype).reshape(height, width)
    return pixels.astype(np.float64) / maxval


def write_pgm(gray, path, maxval: int = 255) -> None:
    """Write a [0, 1] grid as binary PGM (used for fixtures and demos)."""
    arr = np.clip(np.asarray(gray, dtype=np.float64), 0.0, 1.0)
    h, w = arr.shape
    dtype = ">u2" if maxval > 255 else "u1"
    pixels = np.rint(arr * maxval).astype(dtype)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(pixels.tobytes())


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """PCG64 generator keyed by ``(seed, stream)``.

    Equal keys give identical draw sequences; distinct streams are
    statistically independent (SeedSequence spawn keys).
    """
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class SampleEntry:
    sample_id: str
    source: str
    seed: int
    stream: int
    x: str
    y: str
    ir: str
    im: str


@dataclass
class DatasetManifest:
    """Index of a synthetic corpus; paths are relative to the manifest file."""

    geometry_id: str
    params: dict
    samples: list[SampleEntry] = field(default_factory=list)
    root: Path | None = None

    def to_json(self) -> str:
        doc = {
            "geometry_id": self.geometry_id,
            "params": self.params,
            "samples": [asdict(s) for s in self.samples],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def resolve(self, rel: str) -> Path:
        base = self.root if self.root is not None else Path(".")
        return base / rel


_ENTRY_FIELDS = tuple(SampleEntry.__dataclass_fields__)


def save_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(manifest.to_json())


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Parse a manifest; unknown fields are ignored."""
    path = Path(path)
    doc = json.loads(path.read_text())
    for key in ("geometry_id", "params", "samples"):
        if key not in doc:
            raise FormatError(f"{path}: manifest missing field {key!r}")
    samples = []
    for i, raw in enumerate(doc["samples"]):
        missing = [k for k in _ENTRY_FIELDS if k not in raw]
        if missing:
            raise FormatError(f"{path}: sample {i} missing fields {missing}")
        samples.append(SampleEntry(**{k: raw[k] for k in _ENTRY_FIELDS}))
    manifest = DatasetManifest(doc["geometry_id"], dict(doc["params"]), samples,
                               root=path.parent)
    if check_files:
        for s in samples:
            for rel in (s.x, s.y, s.ir, s.im):
                p = manifest.resolve(rel)
                if not os.path.exists(p):
                    raise FormatError(f"{path}: referenced file missing: {p}")
    return manifest
