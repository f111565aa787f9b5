"""Seeded synthetic layered phantoms with ground truth.

Slices and volumes mimic layered skin scans: a bright epidermis band with a
smooth, band-limited wavy boundary, irregular bright blobs inside the band
(melanin analog), sparse dim dots just below it (capillary analog), speckle
noise everywhere, and (in 3D) tubular vessels strictly below the band whose
intensities overlap the blob range, so intensity alone cannot separate the
two classes.

All generation is a pure function of (config, seed, id): identical inputs
produce bit-identical outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import PhantomConfigError
from .fields import SampleId, Volume3D, slice_xz
from .rng import CounterRng, stream_seed, string_key

_TAG_VOLUME = 101
_TAG_SLICE = 102
_TAG_SPLIT = 103

_BASE_DERMIS = 0.10
_BASE_EPIDERMIS = 0.32
_CAPILLARY_INTENSITY = (0.26, 0.46)
_VESSEL_CLEARANCE = 1  # voxels between band bottom and any vessel
_WAVE_FRACTIONS = (0.62, 0.22, 0.09, 0.04, 0.03)  # <= 5 sinusoid components


@dataclass(frozen=True)
class PhantomConfig:
    """Geometry and texture of generated phantoms.

    Densities are expected counts per 1e3 band pixels (2D slices) or per
    1e4 band voxels (3D volumes) for melanin, and per 1e3 / 1e4 dermis
    pixels/voxels for capillary dots.
    """

    dims: tuple[int, int, int] = (128, 16, 192)  # (X, Y, Z)
    spacing_um: tuple[float, float, float] = (12.0, 12.0, 12.0)
    seed: int = 0
    epidermis_depth: float = 42.0        # mean top-boundary depth, px
    epidermis_thickness: float = 46.0    # mean band thickness, px
    waviness_amplitude: float = 6.0      # px
    frequency_cap: float = 3.0           # max cycles across the slice width
    melanin_density: float = 4.0
    melanin_intensity: tuple[float, float] = (0.55, 1.0)
    noise_level: float = 0.05
    vessel_count: int = 10               # 3D only
    vessel_radius: tuple[float, float] = (2.0, 4.5)
    capillary_density: float = 0.8

    def __post_init__(self):
        X, Y, Z = self.dims
        if min(X, Y, Z) < 1:
            raise PhantomConfigError("all dims must be >= 1")
        if self.epidermis_thickness <= 0:
            raise PhantomConfigError("epidermis thickness must be > 0")
        if self.epidermis_depth + self.epidermis_thickness >= Z:
            raise PhantomConfigError("epidermis band must fit above the volume floor")
        for name in ("melanin_density", "capillary_density", "noise_level",
                     "waviness_amplitude"):
            if getattr(self, name) < 0:
                raise PhantomConfigError(f"{name} must be >= 0")
        if self.vessel_count < 0:
            raise PhantomConfigError("vessel count must be >= 0")
        if self.frequency_cap < 0.5:
            raise PhantomConfigError("frequency cap must be >= 0.5 cycles")


@dataclass
class LabeledSlice:
    image: np.ndarray         # (Z, X) float64 in [0, 1]
    epidermis_gt: np.ndarray  # (Z, X) uint8
    id: SampleId


@dataclass
class LabeledVolume:
    volume: Volume3D
    epidermis_gt: np.ndarray  # (Z, Y, X) uint8
    vessel_gt: np.ndarray     # (Z, Y, X) uint8


def _wave_field(rng: CounterRng, amplitude: float, freq_cap: float,
                X: int, Y: int | None) -> np.ndarray:
    """Band-limited random surface: sum of <= 5 random-phase sinusoids.

    Returns shape (X,) when Y is None, else (Y, X). The first component is
    forced above one full cycle across the width, and the result is rescaled
    (still a sum of sinusoids) so its peak-to-peak span is a predictable
    multiple of the amplitude; random phases alone occasionally cancel.
    """
    n = len(_WAVE_FRACTIONS)
    scale = rng.uniform(n, 0.75, 1.25)
    fx = rng.uniform(n, 0.4, max(freq_cap, 0.5))
    fx[0] = min(max(fx[0], 1.0), freq_cap)
    fy = rng.uniform(n, 0.3, min(freq_cap, 1.5))
    phase = rng.uniform(n, 0.0, 2.0 * math.pi)
    span = 2.0 * amplitude * rng.uniform(1, 0.8, 1.0)[0]
    xs = np.arange(X, dtype=np.float64) / X
    if Y is None:
        out = np.zeros(X)
        for i in range(n):
            out += (amplitude * _WAVE_FRACTIONS[i] * scale[i]
                    * np.sin(2.0 * math.pi * fx[i] * xs + phase[i]))
    else:
        ys = np.arange(Y, dtype=np.float64) / Y
        out = np.zeros((Y, X))
        for i in range(n):
            arg = 2.0 * math.pi * (fx[i] * xs[None, :] + fy[i] * ys[:, None]) + phase[i]
            out += amplitude * _WAVE_FRACTIONS[i] * scale[i] * np.sin(arg)
    p2p = float(out.max() - out.min())
    if p2p > 1e-9:
        out *= span / p2p
    return out


def _band_boundaries(rng: CounterRng, cfg: PhantomConfig, X: int,
                     Y: int | None) -> tuple[np.ndarray, np.ndarray]:
    _, _, Z = cfg.dims
    top = cfg.epidermis_depth + _wave_field(rng, cfg.waviness_amplitude,
                                            cfg.frequency_cap, X, Y)
    thick = cfg.epidermis_thickness + _wave_field(
        rng, 0.5 * cfg.waviness_amplitude, cfg.frequency_cap, X, Y)
    top = np.clip(top, 1.0, Z - 4.0)
    bottom = np.clip(top + np.maximum(thick, 3.0), None, Z - 2.0)
    return top, bottom


def _gaussian_blob_2d(img, cx, cz, sx, sz, intensity):
    Z, X = img.shape
    x0, x1 = max(0, int(cx - 3 * sx)), min(X, int(cx + 3 * sx) + 1)
    z0, z1 = max(0, int(cz - 3 * sz)), min(Z, int(cz + 3 * sz) + 1)
    if x0 >= x1 or z0 >= z1:
        return
    xs = np.arange(x0, x1, dtype=np.float64)
    zs = np.arange(z0, z1, dtype=np.float64)
    q = (((xs - cx) / sx) ** 2)[None, :] + (((zs - cz) / sz) ** 2)[:, None]
    img[z0:z1, x0:x1] = np.maximum(img[z0:z1, x0:x1], intensity * np.exp(-0.5 * q))


def _gaussian_blob_3d(img, cx, cy, cz, sx, sy, sz, intensity):
    Z, Y, X = img.shape
    x0, x1 = max(0, int(cx - 3 * sx)), min(X, int(cx + 3 * sx) + 1)
    y0, y1 = max(0, int(cy - 3 * sy)), min(Y, int(cy + 3 * sy) + 1)
    z0, z1 = max(0, int(cz - 3 * sz)), min(Z, int(cz + 3 * sz) + 1)
    if x0 >= x1 or y0 >= y1 or z0 >= z1:
        return
    xs = (np.arange(x0, x1, dtype=np.float64) - cx) / sx
    ys = (np.arange(y0, y1, dtype=np.float64) - cy) / sy
    zs = (np.arange(z0, z1, dtype=np.float64) - cz) / sz
    q = zs[:, None, None] ** 2 + ys[None, :, None] ** 2 + xs[None, None, :] ** 2
    sub = img[z0:z1, y0:y1, x0:x1]
    img[z0:z1, y0:y1, x0:x1] = np.maximum(sub, intensity * np.exp(-0.5 * q))


def _normalize(img: np.ndarray) -> np.ndarray:
    lo, hi = img.min(), img.max()
    if hi <= lo:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def gen_slice(cfg: PhantomConfig, sample_id: SampleId) -> LabeledSlice:
    """Generate one labeled x-z slice, deterministic per (cfg.seed, id)."""
    X, _, Z = cfg.dims
    rng = CounterRng(stream_seed(cfg.seed, _TAG_SLICE,
                                 string_key(sample_id.volume), sample_id.y))
    top, bottom = _band_boundaries(rng, cfg, X, None)
    zs = np.arange(Z, dtype=np.float64)[:, None]
    gt = ((zs >= top[None, :]) & (zs < bottom[None, :])).astype(np.uint8)

    img = np.full((Z, X), _BASE_DERMIS)
    band = np.where(gt > 0, _BASE_EPIDERMIS, 0.0)

    n_blobs = int(round(cfg.melanin_density * X * cfg.epidermis_thickness / 1e3))
    lo_i, hi_i = cfg.melanin_intensity
    for _ in range(n_blobs):
        u = rng.uniform(6)
        cx = u[0] * X
        cz_frac = 0.08 + 0.84 * u[1]
        ix = min(int(cx), X - 1)
        cz = top[ix] + cz_frac * (bottom[ix] - top[ix])
        sx = 2.0 + 3.0 * u[2]
        sz = 1.2 + 1.8 * u[3]
        intensity = lo_i + (hi_i - lo_i) * u[4]
        _gaussian_blob_2d(band, cx, cz, sx, sz, intensity)
    img = np.maximum(img, np.where(gt > 0, band, 0.0))  # melanin stays in-band

    n_dots = int(round(cfg.capillary_density
                       * X * max(Z - cfg.epidermis_depth - cfg.epidermis_thickness, 0)
                       / 1e3))
    for _ in range(n_dots):
        u = rng.uniform(4)
        cx = u[0] * X
        ix = min(int(cx), X - 1)
        cz = bottom[ix] + 1.0 + 6.0 * u[1]
        intensity = _CAPILLARY_INTENSITY[0] + (
            _CAPILLARY_INTENSITY[1] - _CAPILLARY_INTENSITY[0]) * u[2]
        _gaussian_blob_2d(img, cx, cz, 1.3, 1.3, intensity)

    img += rng.uniform(Z * X, -cfg.noise_level, cfg.noise_level).reshape(Z, X)
    return LabeledSlice(image=_normalize(img), epidermis_gt=gt, id=sample_id)


def _rasterize_tube(mask, p0, p1, radius):
    Z, Y, X = mask.shape
    lo = np.floor(np.minimum(p0, p1) - radius - 1).astype(int)
    hi = np.ceil(np.maximum(p0, p1) + radius + 1).astype(int)
    z0, y0, x0 = np.maximum(lo, 0)
    z1, y1, x1 = np.minimum(hi + 1, [Z, Y, X])
    if z0 >= z1 or y0 >= y1 or x0 >= x1:
        return
    zs = np.arange(z0, z1, dtype=np.float64)
    ys = np.arange(y0, y1, dtype=np.float64)
    xs = np.arange(x0, x1, dtype=np.float64)
    d = p1 - p0
    length2 = float(d @ d)
    vz = zs[:, None, None] - p0[0]
    vy = ys[None, :, None] - p0[1]
    vx = xs[None, None, :] - p0[2]
    if length2 > 0:
        t = np.clip((vz * d[0] + vy * d[1] + vx * d[2]) / length2, 0.0, 1.0)
    else:
        t = 0.0
    dist2 = (vz - t * d[0]) ** 2 + (vy - t * d[1]) ** 2 + (vx - t * d[2]) ** 2
    mask[z0:z1, y0:y1, x0:x1] |= dist2 <= radius * radius


def gen_volume(cfg: PhantomConfig, index: int = 0) -> LabeledVolume:
    """Generate one labeled 3D phantom, deterministic per (cfg.seed, index).

    Boundaries vary smoothly in x and y; vessels are randomly oriented tubes
    kept strictly below the per-column band bottom, with intensities drawn
    from the melanin range so the two classes overlap.
    """
    X, Y, Z = cfg.dims
    rng = CounterRng(stream_seed(cfg.seed, _TAG_VOLUME, index))
    top, bottom = _band_boundaries(rng, cfg, X, Y)
    zs = np.arange(Z, dtype=np.float64)[:, None, None]
    gt = ((zs >= top[None, :, :]) & (zs < bottom[None, :, :])).astype(np.uint8)

    img = np.full((Z, Y, X), _BASE_DERMIS)
    band = np.where(gt > 0, _BASE_EPIDERMIS, 0.0)

    n_blobs = int(round(cfg.melanin_density * X * Y * cfg.epidermis_thickness / 1e4))
    lo_i, hi_i = cfg.melanin_intensity
    for _ in range(n_blobs):
        u = rng.uniform(8)
        cx, cy = u[0] * X, u[1] * Y
        ix, iy = min(int(cx), X - 1), min(int(cy), Y - 1)
        cz = top[iy, ix] + (0.08 + 0.84 * u[2]) * (bottom[iy, ix] - top[iy, ix])
        sx = 2.0 + 3.0 * u[3]
        sy = 1.5 + 2.5 * u[4]
        sz = 1.2 + 1.8 * u[5]
        intensity = lo_i + (hi_i - lo_i) * u[6]
        _gaussian_blob_3d(band, cx, cy, cz, sx, sy, sz, intensity)
    img = np.maximum(img, np.where(gt > 0, band, 0.0))

    dermis_depth = max(Z - cfg.epidermis_depth - cfg.epidermis_thickness, 0)
    n_dots = int(round(cfg.capillary_density * X * Y * dermis_depth / 1e4))
    for _ in range(n_dots):
        u = rng.uniform(5)
        cx, cy = u[0] * X, u[1] * Y
        ix, iy = min(int(cx), X - 1), min(int(cy), Y - 1)
        cz = bottom[iy, ix] + 1.0 + 6.0 * u[2]
        intensity = _CAPILLARY_INTENSITY[0] + (
            _CAPILLARY_INTENSITY[1] - _CAPILLARY_INTENSITY[0]) * u[3]
        _gaussian_blob_3d(img, cx, cy, cz, 1.3, 1.3, 1.3, intensity)

    vessel_gt = np.zeros((Z, Y, X), dtype=bool)
    if cfg.vessel_count > 0:
        r_lo, r_hi = cfg.vessel_radius
        floor_lo = float(np.ceil(bottom).max()) + _VESSEL_CLEARANCE + 1
        if floor_lo + r_hi + 2 >= Z:
            raise PhantomConfigError("no room for vessels below the epidermis band")
        for _ in range(cfg.vessel_count):
            u = rng.uniform(8)
            radius = r_lo + (r_hi - r_lo) * u[0]
            z_lo = floor_lo + radius
            z_hi = Z - 2 - radius
            cz = z_lo + (z_hi - z_lo) * u[1]
            cx = (0.15 + 0.7 * u[2]) * X
            cy = u[3] * Y
            azim = 2.0 * math.pi * u[4]
            tilt = (u[5] - 0.5) * 0.5
            direction = np.array([tilt, math.sin(azim), math.cos(azim)])
            direction /= math.sqrt(float(direction @ direction))
            half = 0.35 * max(X, Y)
            p0 = np.array([cz, cy, cx]) - half * direction
            p1 = np.array([cz, cy, cx]) + half * direction
            p0[0] = np.clip(p0[0], z_lo, z_hi)
            p1[0] = np.clip(p1[0], z_lo, z_hi)
            tube = np.zeros_like(vessel_gt)
            _rasterize_tube(tube, p0, p1, radius)
            # strictly below the band bottom, with clearance
            zcut = np.ceil(bottom)[None, :, :] + _VESSEL_CLEARANCE
            tube &= zs >= zcut
            intensity = lo_i + (hi_i - lo_i) * u[6]
            img[tube] = np.maximum(img[tube], intensity)
            vessel_gt |= tube

    img += rng.uniform(Z * Y * X, -cfg.noise_level, cfg.noise_level).reshape(Z, Y, X)
    vol = Volume3D(values=_normalize(img), spacing_um=cfg.spacing_um)
    return LabeledVolume(volume=vol, epidermis_gt=gt,
                         vessel_gt=vessel_gt.astype(np.uint8))


def volume_slices(lv: LabeledVolume, volume_id: str) -> list[LabeledSlice]:
    """Split a labeled volume into per-y labeled x-z slices."""
    X, Y, Z = lv.volume.dims
    out = []
    gt_vol = Volume3D(values=lv.epidermis_gt, spacing_um=lv.volume.spacing_um)
    for y in range(Y):
        out.append(LabeledSlice(
            image=slice_xz(lv.volume, y),
            epidermis_gt=np.ascontiguousarray(gt_vol.values[:, y, :]).astype(np.uint8),
            id=SampleId(volume=volume_id, y=y),
        ))
    return out


def split_dataset(volume_ids, fold_count: int, fold_index: int,
                  test_fraction: float, seed: int):
    """Split volume ids into (train, val, test) by volume, deterministically.

    The test set takes round(n * test_fraction) volumes; the remainder is
    divided into fold_count folds and fold_index selects the validation fold.
    No volume appears in two partitions.
    """
    ids = list(volume_ids)
    n = len(ids)
    if fold_count < 2:
        raise ValueError("fold count must be >= 2")
    if not 0 <= fold_index < fold_count:
        raise ValueError(f"fold index {fold_index} outside [0, {fold_count})")
    n_test = int(round(n * test_fraction))
    if n - n_test < fold_count:
        raise ValueError(f"{n} volumes is too few for {fold_count} folds "
                         f"plus {n_test} test volumes")
    rng = CounterRng(stream_seed(seed, _TAG_SPLIT))
    order = [ids[i] for i in rng.permutation(n)]
    test = order[:n_test]
    rest = order[n_test:]
    val = rest[fold_index::fold_count]
    train = [v for i, v in enumerate(rest) if i % fold_count != fold_index]
    return train, val, test
