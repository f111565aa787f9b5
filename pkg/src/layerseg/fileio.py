"""On-disk formats: volume files (JSON sidecar + raw payload) and P5 graymaps.

Volume format: `<name>.json` holds {"dims": [X, Y, Z], "spacing_um":
[dx, dy, dz], "dtype": "f32le"|"u8", "order": "x-fastest"}; `<name>.raw`
holds exactly X*Y*Z little-endian values in x-fastest order. Scalar volumes
are stored as 32-bit floats (masks as bytes), so write(read(...)) is
bit-exact but float payloads round once from the in-memory doubles.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import VolumeFormatError
from .fields import Volume3D

_DTYPES = {"f32le": np.dtype("<f4"), "u8": np.dtype("u1")}


def _paths(path) -> tuple[Path, Path]:
    base = Path(path)
    if base.suffix in (".json", ".raw"):
        base = base.with_suffix("")
    return base.with_suffix(".json"), base.with_suffix(".raw")


def write_volume(vol: Volume3D, path, *, as_mask: bool = False) -> None:
    """Write a volume (or uint8 mask volume) to `<path>.json` + `<path>.raw`."""
    header_path, raw_path = _paths(path)
    X, Y, Z = vol.dims
    dtype_name = "u8" if as_mask else "f32le"
    payload = np.ascontiguousarray(vol.values, dtype=_DTYPES[dtype_name])
    header = {
        "dims": [X, Y, Z],
        "spacing_um": list(vol.spacing_um),
        "dtype": dtype_name,
        "order": "x-fastest",
    }
    header_path.write_text(json.dumps(header, sort_keys=True) + "\n")
    raw_path.write_bytes(payload.tobytes())


def read_volume(path) -> Volume3D:
    """Read a volume written by write_volume; raises VolumeFormatError on mismatch."""
    header_path, raw_path = _paths(path)
    try:
        header = json.loads(header_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise VolumeFormatError(f"cannot read volume header {header_path}: {exc}") from exc
    for key in ("dims", "spacing_um", "dtype", "order"):
        if key not in header:
            raise VolumeFormatError(f"volume header missing key {key!r}")
    if header["order"] != "x-fastest":
        raise VolumeFormatError(f"unsupported order {header['order']!r}")
    if header["dtype"] not in _DTYPES:
        raise VolumeFormatError(f"unsupported dtype {header['dtype']!r}")
    X, Y, Z = (int(d) for d in header["dims"])
    dtype = _DTYPES[header["dtype"]]
    data = raw_path.read_bytes()
    expected = X * Y * Z * dtype.itemsize
    if len(data) != expected:
        raise VolumeFormatError(
            f"payload size {len(data)} != expected {expected} for dims {X}x{Y}x{Z}")
    values = np.frombuffer(data, dtype=dtype).reshape(Z, Y, X)
    return Volume3D(values=values.copy(), spacing_um=tuple(header["spacing_um"]))


def write_graymap(field, path) -> None:
    """Export a 2D field as an 8-bit binary portable graymap (P5), min-max scaled."""
    arr = np.asarray(field, dtype=np.float64)
    if arr.ndim != 2:
        raise VolumeFormatError(f"graymap export needs a 2D field, got {arr.shape}")
    lo, hi = arr.min(), arr.max()
    if hi > lo:
        scaled = np.rint((arr - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        scaled = np.zeros(arr.shape, dtype=np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(scaled.tobytes())


def read_graymap(path) -> np.ndarray:
    """Read back a P5 graymap as a uint8 (Z, X) array (used by tests)."""
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise VolumeFormatError(f"not a P5 graymap: {path}")
    w, h = (int(v) for v in parts[1].split())
    pixels = np.frombuffer(parts[3][: w * h], dtype=np.uint8)
    if pixels.size != w * h:
        raise VolumeFormatError(f"graymap payload truncated: {path}")
    return pixels.reshape(h, w).copy()
