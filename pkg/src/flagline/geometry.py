"""Sphere projections: dual-fisheye dewarp to ERP, rectilinear view renders.

Coordinate conventions used throughout:

* ERP rasters are 2:1 ``(H, W, 3)``, longitude grows left to right over
  [-pi, pi), latitude top to bottom over [pi/2, -pi/2]. Pixel centers sit
  at ``u + 0.5``.
* World directions are unit vectors with ``z`` forward, ``x`` right,
  ``y`` up, so longitude = atan2(x, z) and latitude = asin(y).
* Fisheye lenses follow the equidistant model ``r = f * theta`` with
  ``f = radius / (fov/2)``; each lens is a circle inside the shared raw
  raster, yawed about the vertical axis.

The inverse (dewarp) and forward (synthetic capture render) mappings are
independent code paths, which is what lets round-trip tests bound the
resampling error. All resampling is bilinear; samples outside a lens
field of view are black.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernels import bilinear_sample


class GeometryError(Exception):
    pass


class OutOfBounds(GeometryError):
    pass


class LayoutInvalid(GeometryError):
    pass


@dataclass
class LensSpec:
    cx: float
    cy: float
    radius: float
    fov_deg: float
    yaw_deg: float


@dataclass
class FisheyeLayout:
    lenses: list[LensSpec]

    def validate(self, raster_w: int | None = None, raster_h: int | None = None) -> None:
        if len(self.lenses) != 2:
            raise LayoutInvalid(f"expected 2 lenses, got {len(self.lenses)}")
        for lens in self.lenses:
            if lens.radius <= 0:
                raise LayoutInvalid("lens radius must be > 0")
            if not (90.0 < lens.fov_deg < 220.0):
                raise LayoutInvalid(f"lens fov {lens.fov_deg} outside (90, 220)")
            if raster_w is not None:
                if (
                    lens.cx - lens.radius < 0
                    or lens.cx + lens.radius > raster_w
                    or lens.cy - lens.radius < 0
                    or lens.cy + lens.radius > raster_h
                ):
                    raise LayoutInvalid("lens circle falls outside the source raster")
        yaw_gap = abs(((self.lenses[0].yaw_deg - self.lenses[1].yaw_deg) + 180.0) % 360.0 - 180.0)
        if abs(yaw_gap - 180.0) > 1e-6:
            raise LayoutInvalid("two lenses must have opposite yaw")

    def to_json(self) -> dict:
        return {
            "lenses": [
                {
                    "cx": l.cx,
                    "cy": l.cy,
                    "radius": l.radius,
                    "fov_deg": l.fov_deg,
                    "yaw_deg": l.yaw_deg,
                }
                for l in self.lenses
            ]
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FisheyeLayout":
        return cls(lenses=[LensSpec(**l) for l in obj["lenses"]])

    @classmethod
    def load(cls, path) -> "FisheyeLayout":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


VIEW_YAWS_DEG = {"back": 180.0, "left": -90.0, "front": 0.0, "right": 90.0}


@dataclass
class ViewSpec:
    name: str
    yaw_deg: float
    hfov_deg: float = 90.0
    width: int = 640
    height: int = 640
    pitch_deg: float = 0.0

    @classmethod
    def default(cls, name: str, size: int = 640, hfov_deg: float = 90.0) -> "ViewSpec":
        if name not in VIEW_YAWS_DEG:
            raise GeometryError(f"unknown view {name!r}")
        return cls(name=name, yaw_deg=VIEW_YAWS_DEG[name], hfov_deg=hfov_deg, width=size, height=size)


def default_views(size: int = 640) -> list[ViewSpec]:
    return [ViewSpec.default(n, size) for n in ("back", "left", "front", "right")]


# ---------------------------------------------------------------------------
# scalar pixel <-> direction mapping
# ---------------------------------------------------------------------------

def erp_pixel_to_direction(u: float, v: float, width: int, height: int) -> tuple[float, float]:
    """Continuous ERP pixel coords to (longitude, latitude) in radians."""
    if not (0 <= u < width and 0 <= v < height):
        raise OutOfBounds(f"({u}, {v}) outside {width}x{height}")
    lon = 2.0 * math.pi * ((u + 0.5) / width) - math.pi
    lat = math.pi / 2.0 - math.pi * ((v + 0.5) / height)
    return lon, lat


def direction_to_erp_pixel(lon: float, lat: float, width: int, height: int) -> tuple[float, float]:
    u = (lon + math.pi) / (2.0 * math.pi) * width - 0.5
    v = (math.pi / 2.0 - lat) / math.pi * height - 0.5
    return u, v


# ---------------------------------------------------------------------------
# vectorized direction math
# ---------------------------------------------------------------------------

def _erp_direction_grid(width: int, height: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    us = (np.arange(width, dtype=np.float64) + 0.5) / width
    vs = (np.arange(height, dtype=np.float64) + 0.5) / height
    lon = 2.0 * np.pi * us - np.pi
    lat = np.pi / 2.0 - np.pi * vs
    lon_g, lat_g = np.meshgrid(lon, lat)
    cos_lat = np.cos(lat_g)
    dx = cos_lat * np.sin(lon_g)
    dy = np.sin(lat_g)
    dz = cos_lat * np.cos(lon_g)
    return dx, dy, dz


def _rotate_yaw(dx, dy, dz, yaw_rad: float):
    c = math.cos(yaw_rad)
    s = math.sin(yaw_rad)
    return dx * c + dz * s, dy, -dx * s + dz * c


def _lens_pixel_coords(dx, dy, dz, lens: LensSpec):
    """Project world directions into one lens; returns (px, py, theta)."""
    lx, ly, lz = _rotate_yaw(dx, dy, dz, -math.radians(lens.yaw_deg))
    theta = np.arccos(np.clip(lz, -1.0, 1.0))
    alpha = np.arctan2(ly, lx)
    focal = lens.radius / (math.radians(lens.fov_deg) / 2.0)
    r = focal * theta
    px = lens.cx + r * np.cos(alpha) - 0.5
    py = lens.cy - r * np.sin(alpha) - 0.5
    return px, py, theta


@dataclass
class DewarpMap:
    """Precomputed per-pixel sampling map for one (layout, ERP size) pair."""

    xs: np.ndarray
    ys: np.ndarray
    valid: np.ndarray
    shape: tuple[int, int]


def build_dewarp_map(layout: FisheyeLayout, out_width: int, out_height: int) -> DewarpMap:
    layout.validate()
    dx, dy, dz = _erp_direction_grid(out_width, out_height)
    best_px = np.zeros((out_height, out_width), dtype=np.float64)
    best_py = np.zeros_like(best_px)
    best_theta = np.full_like(best_px, np.inf)
    valid = np.zeros((out_height, out_width), dtype=bool)
    for lens in layout.lenses:
        px, py, theta = _lens_pixel_coords(dx, dy, dz, lens)
        half_fov = math.radians(lens.fov_deg) / 2.0
        # hard seam: each direction sampled from the lens whose axis is nearest
        closer = theta < best_theta
        best_px = np.where(closer, px, best_px)
        best_py = np.where(closer, py, best_py)
        valid = np.where(closer, theta <= half_fov, valid)
        best_theta = np.where(closer, theta, best_theta)
    return DewarpMap(xs=best_px.ravel(), ys=best_py.ravel(), valid=valid.ravel(), shape=(out_height, out_width))


def apply_map(src: np.ndarray, m: DewarpMap, wrap_x: bool = False) -> np.ndarray:
    sampled = bilinear_sample(src, m.xs, m.ys, wrap_x)
    sampled[~m.valid] = 0.0
    out = np.clip(np.rint(sampled), 0, 255).astype(np.uint8)
    return out.reshape(m.shape[0], m.shape[1], 3)


def dewarp_fisheye_to_erp(
    frame: np.ndarray,
    layout: FisheyeLayout,
    out_width: int,
    out_height: int,
    dewarp_map: DewarpMap | None = None,
) -> np.ndarray:
    """Dewarp one dual-fisheye raster to ERP. Timestamp handling is the caller's."""
    layout.validate(frame.shape[1], frame.shape[0])
    m = dewarp_map or build_dewarp_map(layout, out_width, out_height)
    return apply_map(frame, m, wrap_x=False)


@dataclass
class ViewMap:
    xs: np.ndarray
    ys: np.ndarray
    shape: tuple[int, int]


def build_view_map(spec: ViewSpec, erp_width: int, erp_height: int) -> ViewMap:
    focal = (spec.width / 2.0) / math.tan(math.radians(spec.hfov_deg) / 2.0)
    us = np.arange(spec.width, dtype=np.float64) + 0.5
    vs = np.arange(spec.height, dtype=np.float64) + 0.5
    px = (us - spec.width / 2.0) / focal
    py = (spec.height / 2.0 - vs) / focal
    px_g, py_g = np.meshgrid(px, py)
    norm = np.sqrt(px_g * px_g + py_g * py_g + 1.0)
    dx = px_g / norm
    dy = py_g / norm
    dz = 1.0 / norm
    if spec.pitch_deg:
        c = math.cos(math.radians(spec.pitch_deg))
        s = math.sin(math.radians(spec.pitch_deg))
        dy, dz = dy * c + dz * s, -dy * s + dz * c
    dx, dy, dz = _rotate_yaw(dx, dy, dz, math.radians(spec.yaw_deg))
    lon = np.arctan2(dx, dz)
    lat = np.arcsin(np.clip(dy, -1.0, 1.0))
    xs = (lon + np.pi) / (2.0 * np.pi) * erp_width - 0.5
    ys = (np.pi / 2.0 - lat) / np.pi * erp_height - 0.5
    return ViewMap(xs=xs.ravel(), ys=ys.ravel(), shape=(spec.height, spec.width))


def render_rectilinear_view(
    erp: np.ndarray, spec: ViewSpec, view_map: ViewMap | None = None
) -> np.ndarray:
    """Gnomonic render of one ~90 degree view from an ERP frame."""
    m = view_map or build_view_map(spec, erp.shape[1], erp.shape[0])
    sampled = bilinear_sample(erp, m.xs, m.ys, wrap_x=True)
    out = np.clip(np.rint(sampled), 0, 255).astype(np.uint8)
    return out.reshape(m.shape[0], m.shape[1], 3)


# ---------------------------------------------------------------------------
# forward model: render synthetic dual-fisheye captures from an ERP scene
# ---------------------------------------------------------------------------

@dataclass
class FisheyeRenderMap:
    xs: np.ndarray
    ys: np.ndarray
    valid: np.ndarray
    shape: tuple[int, int]


def build_fisheye_render_map(
    layout: FisheyeLayout, raster_w: int, raster_h: int, erp_width: int, erp_height: int
) -> FisheyeRenderMap:
    layout.validate(raster_w, raster_h)
    xs_pix = np.arange(raster_w, dtype=np.float64) + 0.5
    ys_pix = np.arange(raster_h, dtype=np.float64) + 0.5
    gx, gy = np.meshgrid(xs_pix, ys_pix)

    best_xs = np.zeros((raster_h, raster_w), dtype=np.float64)
    best_ys = np.zeros_like(best_xs)
    valid = np.zeros((raster_h, raster_w), dtype=bool)
    best_r = np.full_like(best_xs, np.inf)
    for lens in layout.lenses:
        rx = gx - (lens.cx)
        ry = (lens.cy) - gy
        r = np.sqrt(rx * rx + ry * ry)
        focal = lens.radius / (math.radians(lens.fov_deg) / 2.0)
        theta = r / focal
        alpha = np.arctan2(ry, rx)
        sin_t = np.sin(theta)
        lx = sin_t * np.cos(alpha)
        ly = sin_t * np.sin(alpha)
        lz = np.cos(theta)
        dx, dy, dz = _rotate_yaw(lx, ly, lz, math.radians(lens.yaw_deg))
        lon = np.arctan2(dx, dz)
        lat = np.arcsin(np.clip(dy, -1.0, 1.0))
        exs = (lon + np.pi) / (2.0 * np.pi) * erp_width - 0.5
        eys = (np.pi / 2.0 - lat) / np.pi * erp_height - 0.5
        inside = (r <= lens.radius) & (r < best_r)
        best_xs = np.where(inside, exs, best_xs)
        best_ys = np.where(inside, eys, best_ys)
        valid |= inside
        best_r = np.where(inside, r, best_r)
    return FisheyeRenderMap(xs=best_xs.ravel(), ys=best_ys.ravel(), valid=valid.ravel(), shape=(raster_h, raster_w))


def render_dual_fisheye(
    erp: np.ndarray,
    layout: FisheyeLayout,
    raster_w: int,
    raster_h: int,
    render_map: FisheyeRenderMap | None = None,
) -> np.ndarray:
    """Forward-render a dual-fisheye capture of an ERP scene (synthetic sensor)."""
    m = render_map or build_fisheye_render_map(layout, raster_w, raster_h, erp.shape[1], erp.shape[0])
    sampled = bilinear_sample(erp, m.xs, m.ys, wrap_x=True)
    sampled[~m.valid] = 0.0
    out = np.clip(np.rint(sampled), 0, 255).astype(np.uint8)
    return out.reshape(m.shape[0], m.shape[1], 3)


def seam_mask(erp_width: int, erp_height: int, margin_deg: float = 6.0) -> np.ndarray:
    """True where an ERP pixel lies near the two-lens seam great circle."""
    dx, dy, dz = _erp_direction_grid(erp_width, erp_height)
    # seam: directions equidistant from both lens axes (front/back), i.e. dz ~ 0
    return np.abs(dz) < math.sin(math.radians(margin_deg) / 2.0)
