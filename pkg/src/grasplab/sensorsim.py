"""Synthetic tactile frames and the baseline-differencing grasp detector.

Rendering model
---------------
The gel is a spherical cap (``gel.curvature_radius``) whose apex sits
``apex_height`` above the camera.  Each pixel is back-projected through an
equidistant fisheye (``r = f * theta``) to a ray, intersected with the
undeformed sphere, and the indentation at that surface point is read from
the height map.  Height maps live on an azimuthal-equidistant chart around
the apex: cell ``(i, j)`` sits at arc-length coordinates
``((j - cj) * pitch, (i - ci) * pitch)``.  The deformed reflective surface is
shaded Lambertian by three point LEDs (red, green, blue) on a ring at the
camera plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
from scipy import ndimage

from .catalog import GelSpec, RigidObject2D

MAX_DEFORMATION = 3e-3
BACKGROUND = 0.02


class DeformationBoundError(ValueError):
    pass


class FrameMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class LedRing:
    azimuths_deg: tuple[float, float, float] = (0.0, 120.0, 240.0)
    ring_radius: float = 6e-3
    plane_height: float = 0.0


@dataclass(frozen=True)
class RenderConfig:
    width: int = 480
    height: int = 480
    fov_deg: float = 222.0
    apex_height: float = 7.6e-3
    cap_radius: float = 12e-3
    pitch: float = 0.05e-3
    map_size: int = 560
    reference_level: float = 0.6
    ambient: float = 0.05
    frame_rate_hz: float = 60.0
    nail_azimuth_deg: float | None = None
    nail_occupancy_deg: float = 10.4

    image_circle_fraction: float = 0.9

    @property
    def focal_px(self) -> float:
        radius = self.image_circle_fraction * min(self.width, self.height) / 2.0
        return radius / math.radians(self.fov_deg / 2.0)


@dataclass(frozen=True, eq=False)
class SensorFrame:
    pixels: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if not np.issubdtype(px.dtype, np.floating):
            px = px.astype(float)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError("pixels must be H x W x 3")
        if px.size and (px.min() < 0 or px.max() > 1):
            raise ValueError("intensities must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class _Geometry:
    valid: np.ndarray
    nail: np.ndarray
    chart_x: np.ndarray
    chart_y: np.ndarray
    point: np.ndarray
    n0: np.ndarray
    e_s: np.ndarray
    e_t: np.ndarray
    cos_az: np.ndarray
    sin_az: np.ndarray


@lru_cache(maxsize=8)
def _geometry(gel: GelSpec, cfg: RenderConfig) -> _Geometry:
    R = gel.curvature_radius
    cz = cfg.apex_height - R
    jj, ii = np.meshgrid(np.arange(cfg.width), np.arange(cfg.height))
    dx = jj - (cfg.width - 1) / 2.0
    dy = ii - (cfg.height - 1) / 2.0
    theta = np.hypot(dx, dy) / cfg.focal_px
    az = np.arctan2(dy, dx)
    in_lens = theta <= math.radians(cfg.fov_deg / 2.0)
    u = np.stack([np.sin(theta) * np.cos(az), np.sin(theta) * np.sin(az), np.cos(theta)], axis=-1)
    uc = u[..., 2] * cz
    t = uc + np.sqrt(uc * uc - cz * cz + R * R)
    point = u * t[..., None]
    rel = point - np.array([0.0, 0.0, cz])
    n0 = rel / R
    psi = np.arccos(np.clip(n0[..., 2], -1.0, 1.0))
    psi_max = math.asin(min(1.0, cfg.cap_radius / R))
    valid = in_lens & (psi <= psi_max)
    s = R * psi
    surf_az = np.arctan2(rel[..., 1], rel[..., 0])
    cos_az, sin_az = np.cos(surf_az), np.sin(surf_az)
    e_s = np.stack([np.cos(psi) * cos_az, np.cos(psi) * sin_az, -np.sin(psi)], axis=-1)
    e_t = np.stack([-sin_az, cos_az, np.zeros_like(psi)], axis=-1)

    nail = np.zeros_like(valid)
    if cfg.nail_azimuth_deg is not None:
        a = math.radians(cfg.nail_azimuth_deg)
        along = u[..., 0] * math.cos(a) + u[..., 1] * math.sin(a)
        elevation = np.degrees(np.arctan2(along, u[..., 2]))
        nail = in_lens & (elevation >= 90.0 - cfg.nail_occupancy_deg)
    return _Geometry(valid, nail, s * cos_az, s * sin_az, point, n0, e_s, e_t, cos_az, sin_az)


def _shade(gel: GelSpec, leds: LedRing, cfg: RenderConfig, geo: _Geometry, depth, gx, gy) -> np.ndarray:
    ds = gx * geo.cos_az + gy * geo.sin_az
    dt = -gx * geo.sin_az + gy * geo.cos_az
    n = geo.n0 + ds[..., None] * geo.e_s + dt[..., None] * geo.e_t
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    p = geo.point - depth[..., None] * geo.n0
    out = np.empty(p.shape[:-1] + (3,))
    for c, az_deg in enumerate(leds.azimuths_deg):
        a = math.radians(az_deg)
        led = np.array([leds.ring_radius * math.cos(a), leds.ring_radius * math.sin(a), leds.plane_height])
        v = led - p
        dist2 = np.einsum("...k,...k->...", v, v)
        cos = np.maximum(0.0, -np.einsum("...k,...k->...", n, v) / np.sqrt(dist2))
        out[..., c] = cos / dist2
    return out


@lru_cache(maxsize=8)
def _calibration_gain(gel: GelSpec, leds: LedRing, cfg: RenderConfig) -> float:
    # raw irradiance at the apex for LED 0, undeformed
    one = RenderConfig(width=1, height=1, fov_deg=cfg.fov_deg, apex_height=cfg.apex_height,
                       cap_radius=cfg.cap_radius)
    geo = _geometry(gel, one)
    z = np.zeros((1, 1))
    raw = _shade(gel, leds, one, geo, z, z, z)
    return (cfg.reference_level - cfg.ambient) / float(raw[0, 0, 0])


def _compose(gel, leds, cfg, depth, gx, gy) -> np.ndarray:
    geo = _geometry(gel, cfg)
    raw = _shade(gel, leds, cfg, geo, depth, gx, gy)
    img = cfg.ambient + _calibration_gain(gel, leds, cfg) * raw
    img = np.clip(img, 0.0, 1.0)
    img[~geo.valid] = BACKGROUND
    img[geo.nail] = BACKGROUND
    return img


@lru_cache(maxsize=8)
def _reference_pixels(gel: GelSpec, leds: LedRing, cfg: RenderConfig) -> np.ndarray:
    z = np.zeros((cfg.height, cfg.width))
    img = _compose(gel, leds, cfg, z, z, z)
    img.setflags(write=False)
    return img


def reference_frame(gel: GelSpec | None = None, leds: LedRing | None = None,
                    cfg: RenderConfig | None = None) -> SensorFrame:
    """Undeformed frame; cached per configuration."""
    return SensorFrame(_reference_pixels(gel or GelSpec(), leds or LedRing(), cfg or RenderConfig()))


def render_frame(
    height_map: np.ndarray,
    gel: GelSpec | None = None,
    leds: LedRing | None = None,
    cfg: RenderConfig | None = None,
    timestamp: float = 0.0,
) -> SensorFrame:
    gel, leds, cfg = gel or GelSpec(), leds or LedRing(), cfg or RenderConfig()
    hm = np.asarray(height_map, dtype=float)
    if hm.ndim != 2:
        raise ValueError("height map must be two-dimensional")
    if np.any(hm < 0) or np.max(hm, initial=0.0) > MAX_DEFORMATION:
        raise DeformationBoundError(f"deformation must lie in [0, {MAX_DEFORMATION} m]")
    if not hm.any():
        return SensorFrame(_reference_pixels(gel, leds, cfg), timestamp)

    geo = _geometry(gel, cfg)
    ci, cj = (hm.shape[0] - 1) / 2.0, (hm.shape[1] - 1) / 2.0
    coords = np.array([geo.chart_y / cfg.pitch + ci, geo.chart_x / cfg.pitch + cj])
    # bilinear sampling of the support reaches one cell past it, where gradients still live
    touched = ndimage.map_coordinates((hm > 0).astype(float), coords, order=1, cval=0.0) > 0
    touched &= geo.valid
    gy_map, gx_map = np.gradient(hm, cfg.pitch)
    sub = coords[:, touched]
    sample = lambda m: ndimage.map_coordinates(m, sub, order=1, mode="constant", cval=0.0)
    img = np.array(_reference_pixels(gel, leds, cfg))
    local = _Geometry(
        valid=np.ones(sub.shape[1], bool), nail=geo.nail[touched],
        chart_x=geo.chart_x[touched], chart_y=geo.chart_y[touched],
        point=geo.point[touched], n0=geo.n0[touched], e_s=geo.e_s[touched], e_t=geo.e_t[touched],
        cos_az=geo.cos_az[touched], sin_az=geo.sin_az[touched],
    )
    patch = np.clip(
        cfg.ambient + _calibration_gain(gel, leds, cfg)
        * _shade(gel, leds, cfg, local, sample(hm), sample(gx_map), sample(gy_map)),
        0.0, 1.0,
    )
    patch[local.nail] = BACKGROUND
    img[touched] = patch
    return SensorFrame(img, timestamp)


def frame_timestamp(index: int, cfg: RenderConfig | None = None) -> float:
    cfg = cfg or RenderConfig()
    return 1000.0 * index / cfg.frame_rate_hz


# --- height maps -----------------------------------------------------------

# width of the gel skirt that follows a pressed footprint down
HALO_WIDTH = 1.3e-3
DEFAULT_PRESS_DEPTH = 0.3e-3


def footprint_height_map(
    length: float,
    width: float,
    depth: float = DEFAULT_PRESS_DEPTH,
    center: tuple[float, float] = (0.0, 0.0),
    phi: float = 0.0,
    disk: bool = False,
    cfg: RenderConfig | None = None,
    halo_width: float = HALO_WIDTH,
) -> np.ndarray:
    """Indentation field of a flat footprint pressed ``depth`` into the gel.

    Inside the footprint the gel is displaced by ``depth``; outside it the
    displacement falls off quadratically to zero over ``halo_width``.
    """
    cfg = cfg or RenderConfig()
    n = cfg.map_size
    c = (n - 1) / 2.0
    out = np.zeros((n, n))
    reach = math.hypot(length, width) / 2 + halo_width
    lo = np.clip(np.floor((np.array(center) - reach) / cfg.pitch + c).astype(int), 0, n)
    hi = np.clip(np.ceil((np.array(center) + reach) / cfg.pitch + c).astype(int) + 1, 0, n)
    if np.any(hi <= lo):
        return out
    xs = (np.arange(lo[0], hi[0]) - c) * cfg.pitch - center[0]
    ys = (np.arange(lo[1], hi[1]) - c) * cfg.pitch - center[1]
    dx, dy = np.meshgrid(xs, ys)
    cp, sp = math.cos(phi), math.sin(phi)
    a = dx * cp + dy * sp
    b = -dx * sp + dy * cp
    if disk:
        outside = np.maximum(np.hypot(a, b) - length / 2, 0.0)
    else:
        outside = np.hypot(np.maximum(np.abs(a) - length / 2, 0.0), np.maximum(np.abs(b) - width / 2, 0.0))
    x = np.clip(outside / halo_width, 0.0, 1.0)
    out[lo[1]:hi[1], lo[0]:hi[0]] = depth * (1.0 - x) ** 2
    return out


def object_height_map(obj: RigidObject2D, center=(0.0, 0.0), phi=0.0, depth=DEFAULT_PRESS_DEPTH,
                      cfg: RenderConfig | None = None) -> np.ndarray:
    return footprint_height_map(obj.length_l, obj.width, depth, center, phi, cfg=cfg)


def save_height_map(path, hm: np.ndarray) -> None:
    np.savetxt(path, hm)


def load_height_map(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path))


# --- noise, blobs, detection ----------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    pixel_sigma: float = 0.01
    drift: float = 0.02


def add_sensor_noise(frame: SensorFrame, rng: np.random.Generator, noise: NoiseModel | None = None) -> SensorFrame:
    noise = noise or NoiseModel()
    gain = 1.0 + rng.uniform(-noise.drift, noise.drift)
    px = rng.standard_normal(frame.pixels.shape, dtype=np.float32)
    px *= noise.pixel_sigma
    px += frame.pixels * np.float32(gain)
    np.clip(px, 0.0, 1.0, out=px)
    return SensorFrame(px, frame.timestamp)


CHANGE_THRESHOLD = 0.03


def changed_mask(frame: SensorFrame, reference: SensorFrame, threshold: float = CHANGE_THRESHOLD) -> np.ndarray:
    return np.max(np.abs(frame.pixels - reference.pixels), axis=-1) > threshold


def blob_diameter_px(frame: SensorFrame, reference: SensorFrame, threshold: float = CHANGE_THRESHOLD) -> float:
    """Equivalent diameter of the largest connected changed-pixel region."""
    labels, count = ndimage.label(changed_mask(frame, reference, threshold))
    if count == 0:
        return 0.0
    sizes = np.bincount(labels.ravel())[1:]
    return 2.0 * math.sqrt(sizes.max() / math.pi)


@dataclass(frozen=True)
class DetectorBaselines:
    baseline_empty: SensorFrame
    baseline_object: SensorFrame
    threshold: float = 0.3
    mask: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.baseline_empty.pixels.shape != self.baseline_object.pixels.shape:
            raise FrameMismatchError("baselines differ in size")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")

    @cached_property
    def usable(self) -> np.ndarray:
        return _usable(self.baseline_empty, self.mask)

    @cached_property
    def gap(self) -> float:
        """Difference energy between the two baselines (score normaliser)."""
        gap = _difference_energy(self.baseline_object, self.baseline_empty, self.usable)
        if gap <= 0:
            raise ValueError("object baseline is indistinguishable from the empty baseline")
        return gap


# signed differences are smoothed before rectification so pixel noise averages out
DETECTOR_BLUR_PX = 1.0
DETECTOR_FLOOR = 0.01


def _usable(ref: SensorFrame, mask: np.ndarray | None) -> np.ndarray:
    """Lit, unsaturated reference pixels (2x2 blocks) that the detector may use."""
    level = ref.pixels.mean(axis=-1)
    ok = (level > 0.1) & (ref.pixels.max(axis=-1) < 0.95)
    if mask is not None:
        ok &= mask
    return _blocks(ok.astype(float)) > 0.99


def _blocks(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    img = img[:h, :w]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def _difference_energy(frame: SensorFrame, ref: SensorFrame, usable: np.ndarray) -> float:
    cur, base = _blocks(frame.pixels), _blocks(ref.pixels)
    sel = usable
    ratio = cur[sel].mean(axis=-1) / base[sel].mean(axis=-1)
    # illumination drift is global: normalise it out with a robust gain estimate
    gain = float(np.median(ratio[::4])) if ratio.size else 1.0
    diff = ndimage.gaussian_filter(cur / gain - base, (DETECTOR_BLUR_PX, DETECTOR_BLUR_PX, 0), truncate=3.0)
    mag = np.max(np.abs(diff[sel]), axis=-1)
    return float(np.maximum(mag - DETECTOR_FLOOR, 0.0).mean()) if mag.size else 0.0


def detection_score(frame: SensorFrame, baselines: DetectorBaselines) -> float:
    if frame.pixels.shape != baselines.baseline_empty.pixels.shape:
        raise FrameMismatchError(
            f"frame {frame.pixels.shape} does not match baselines {baselines.baseline_empty.pixels.shape}"
        )
    return _difference_energy(frame, baselines.baseline_empty, baselines.usable) / baselines.gap


def detect_grasp(frame: SensorFrame, baselines: DetectorBaselines) -> tuple[bool, float]:
    score = detection_score(frame, baselines)
    return score > baselines.threshold, score


def default_baselines(gel: GelSpec | None = None, cfg: RenderConfig | None = None,
                      threshold: float = 0.3) -> DetectorBaselines:
    """Empty press and a 1.5 mm reference object pressed at the apex."""
    gel, cfg = gel or GelSpec(), cfg or RenderConfig()
    empty = reference_frame(gel, cfg=cfg)
    obj = render_frame(footprint_height_map(1.5e-3, 1.5e-3, cfg=cfg, disk=True), gel, cfg=cfg)
    geo = _geometry(gel, cfg)
    return DetectorBaselines(empty, obj, threshold, mask=geo.valid & ~geo.nail)


# --- PPM -------------------------------------------------------------------

def write_ppm(path, frame: SensorFrame) -> None:
    data = np.round(frame.pixels * 255.0).astype(np.uint8)
    header = f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())


def read_ppm(path) -> SensorFrame:
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    pos += 1
    if tokens[0] != b"P6" or int(tokens[3]) != 255:
        raise ValueError("only 8-bit binary P6 files are supported")
    w, h = int(tokens[1]), int(tokens[2])
    data = np.frombuffer(raw[pos:pos + w * h * 3], dtype=np.uint8).reshape(h, w, 3)
    return SensorFrame(data / 255.0)
