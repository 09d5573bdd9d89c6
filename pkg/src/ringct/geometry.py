"""Flat-detector fan-beam scanner description and ray geometry.

Coordinates are in mm with the iso-center at the origin, x to the right and
y up. Image row 0 is the top row. At view angle ``phi`` the source sits at
``dsc * (cos phi, sin phi)`` and the flat detector is centered at
``-dcd * (cos phi, sin phi)``, its elements laid out along
``u = (-sin phi, cos phi)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class FanBeamGeometry:
    image_size: int
    pixel_size: float
    n_detectors: int
    detector_spacing: float
    n_views: int
    view_start: float
    view_extent: float
    dist_source_center: float
    dist_center_detector: float
    name: str = "custom"

    def __post_init__(self):
        for attr in ("image_size", "n_detectors", "n_views"):
            if int(getattr(self, attr)) < 1:
                raise ValueError(f"{attr} must be >= 1")
        for attr in ("pixel_size", "detector_spacing", "dist_source_center",
                     "dist_center_detector"):
            if not getattr(self, attr) > 0:
                raise ValueError(f"{attr} must be > 0")
        if not 0 < self.view_extent <= 2 * math.pi + 1e-12:
            raise ValueError("view_extent must lie in (0, 2*pi]")
        if self.fan_half_angle < math.atan(self.fov_radius / self.dist_source_center):
            raise ValueError(
                f"detector fan ({math.degrees(self.fan_half_angle):.2f} deg) does not "
                f"cover the inscribed field of view ({self.fov_radius} mm)")

    @property
    def fov_radius(self) -> float:
        """Radius of the circle inscribed in the image square (mm)."""
        return 0.5 * self.image_size * self.pixel_size

    @property
    def dist_source_detector(self) -> float:
        return self.dist_source_center + self.dist_center_detector

    @property
    def fan_half_angle(self) -> float:
        half_width = 0.5 * self.n_detectors * self.detector_spacing
        return math.atan(half_width / self.dist_source_detector)

    @property
    def full_scan(self) -> bool:
        return abs(self.view_extent - 2 * math.pi) < 1e-9

    @property
    def sino_shape(self) -> tuple[int, int]:
        return (self.n_views, self.n_detectors)

    @property
    def image_shape(self) -> tuple[int, int]:
        return (self.image_size, self.image_size)

    def view_angles(self) -> np.ndarray:
        v = np.arange(self.n_views, dtype=np.float64)
        return self.view_start + self.view_extent * v / self.n_views

    def detector_offsets(self) -> np.ndarray:
        """Lateral position of every detector center on the flat array (mm)."""
        d = np.arange(self.n_detectors, dtype=np.float64)
        return (d - 0.5 * (self.n_detectors - 1)) * self.detector_spacing

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(x, y) of pixel centers, each of shape ``image_shape``."""
        n, ps = self.image_size, self.pixel_size
        c = (np.arange(n) - 0.5 * (n - 1)) * ps
        return np.meshgrid(c, -c)  # x varies along columns, y decreases down rows

    def detector_iso_distance(self) -> np.ndarray:
        """Perpendicular distance from the iso-center to each detector's ray."""
        t = self.detector_offsets()
        return np.abs(t) * self.dist_source_center / np.hypot(self.dist_source_detector, t)

    def scaled(self, factor: int) -> "FanBeamGeometry":
        """Shrink image, detector count and distances by ``factor`` (pixel and
        detector pitch unchanged), preserving the fan and view sampling ratios."""
        return replace(
            self,
            image_size=max(1, round(self.image_size / factor)),
            n_detectors=max(1, round(self.n_detectors / factor)),
            n_views=max(1, round(self.n_views / factor)),
            dist_source_center=self.dist_source_center / factor,
            dist_center_detector=self.dist_center_detector / factor,
            name=f"{self.name}/{factor}",
        )


@dataclass(frozen=True)
class Ray:
    origin: tuple[float, float]
    direction: tuple[float, float]
    length_to_detector: float


_TWO_PI = 2 * math.pi

# image size, pixel size, detectors, spacing, views, DSC, DCD
_TABLE = {
    "g1": (512, 1.0, 681, 2.0, 984, 722.0, 722.0),
    "g2": (512, 1.0, 758, 2.0, 1024, 1075.0, 1075.0),
    "g3": (512, 1.0, 641, 2.133, 720, 750.0, 850.0),
    "g4": (512, 1.0, 880, 2.0, 840, 1000.0, 1000.0),
    "g5": (512, 1.0, 801, 2.0, 900, 950.0, 950.0),
    "g6": (512, 1.0, 900, 1.727, 1000, 550.0, 400.0),
    "ldct": (512, 0.6641, 736, 1.2858, 984, 595.0, 490.6),
    "desk": (64, 1.0, 96, 2.0, 128, 120.0, 120.0),
}

PRESET_IDS = tuple(_TABLE)


def geometry_preset(preset_id: str) -> FanBeamGeometry:
    """Named scanner geometry.

    ``g1``..``g6`` and ``ldct`` are full-size clinical-like scanners; ``desk``
    is a 64x64 configuration small enough for training on a laptop. A suffix
    ``/N`` (e.g. ``g1/8``) returns the preset shrunk by ``N``.
    """
    base, _, factor = preset_id.partition("/")
    if base not in _TABLE:
        raise KeyError(f"unknown geometry {preset_id!r}; valid ids: {', '.join(PRESET_IDS)}")
    n, ps, nd, sp, nv, dsc, dcd = _TABLE[base]
    g = FanBeamGeometry(n, ps, nd, sp, nv, 0.0, _TWO_PI, dsc, dcd, name=base)
    if factor:
        g = g.scaled(int(factor))
    return g


def ray_for(g: FanBeamGeometry, view: int, det: int) -> Ray:
    """Ray from the source to the center of detector ``det`` at ``view``."""
    if not 0 <= view < g.n_views:
        raise IndexError(f"view {view} out of range [0, {g.n_views})")
    if not 0 <= det < g.n_detectors:
        raise IndexError(f"detector {det} out of range [0, {g.n_detectors})")
    phi = g.view_start + g.view_extent * view / g.n_views
    c, s = math.cos(phi), math.sin(phi)
    t = (det - 0.5 * (g.n_detectors - 1)) * g.detector_spacing
    src = (g.dist_source_center * c, g.dist_source_center * s)
    end = (-g.dist_center_detector * c - t * s, -g.dist_center_detector * s + t * c)
    dx, dy = end[0] - src[0], end[1] - src[1]
    length = math.hypot(dx, dy)
    return Ray(src, (dx / length, dy / length), length)


def ray_endpoints(g: FanBeamGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Source and detector-element positions for every (view, detector).

    Returns two arrays of shape ``(n_views, n_detectors, 2)``.
    """
    phi = g.view_angles()[:, None]
    t = g.detector_offsets()[None, :]
    c, s = np.cos(phi), np.sin(phi)
    src = np.stack(np.broadcast_arrays(g.dist_source_center * c,
                                       g.dist_source_center * s), axis=-1)
    end = np.stack([-g.dist_center_detector * c - t * s,
                    -g.dist_center_detector * s + t * c], axis=-1)
    src = np.broadcast_to(src, end.shape)
    return src, end


def geometry_to_dict(g: FanBeamGeometry) -> dict:
    return {f: getattr(g, f) for f in FanBeamGeometry.__dataclass_fields__}


def resolve_geometry(what) -> FanBeamGeometry:
    """Accept a preset id, an inline dict of FanBeamGeometry fields, or a geometry."""
    if isinstance(what, FanBeamGeometry):
        return what
    if isinstance(what, str):
        return geometry_preset(what)
    if isinstance(what, dict):
        unknown = set(what) - set(FanBeamGeometry.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown geometry keys: {sorted(unknown)}")
        return FanBeamGeometry(**what)
    raise TypeError(f"cannot build a geometry from {type(what).__name__}")
