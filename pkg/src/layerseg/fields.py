"""Dense 2D/3D scalar fields and binary masks.

Array conventions used everywhere in the package:

* 2D field: float64 array of shape (Z, X), C-order, so each row (fixed
  depth z, varying x) is contiguous. Rows are the unit the smoothness
  penalty convolves over.
* 2D mask: uint8 array of shape (Z, X) with values in {0, 1}.
* 3D volume: values of shape (Z, Y, X), x varying fastest, wrapped in
  Volume3D together with the physical voxel spacing in micrometers.

Fields are treated as immutable after construction; all operations here are
pure functions and safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeMismatchError


def as_field2d(values) -> np.ndarray:
    """Validate and return a (Z, X) float64 field."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeMismatchError(f"expected a (Z, X) field, got shape {arr.shape}")
    return arr


def as_probability_map(values) -> np.ndarray:
    """Validate a field whose values must all lie in [0, 1]."""
    arr = as_field2d(values)
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise DomainError("probability map values must lie in [0, 1]")
    return arr


def as_mask2d(values) -> np.ndarray:
    """Validate and return a (Z, X) uint8 mask with values in {0, 1}."""
    arr = np.ascontiguousarray(values, dtype=np.uint8)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeMismatchError(f"expected a (Z, X) mask, got shape {arr.shape}")
    if arr.max(initial=0) > 1:
        raise DomainError("mask values must be 0 or 1")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")


@dataclass(frozen=True)
class SampleId:
    """Identifies one x-z slice: source volume plus y index."""

    volume: str
    y: int

    def __str__(self) -> str:
        return f"{self.volume}/y{self.y:03d}"


@dataclass
class Volume3D:
    """X*Y*Z scalar volume with physical spacing.

    values has shape (Z, Y, X); spacing_um is (dx, dy, dz) in micrometers.
    """

    values: np.ndarray
    spacing_um: tuple[float, float, float]

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values)
        if self.values.ndim != 3:
            raise ShapeMismatchError(f"expected (Z, Y, X) values, got {self.values.shape}")
        if any(s <= 0 for s in self.spacing_um):
            raise DomainError("voxel spacings must be strictly positive")
        self.spacing_um = tuple(float(s) for s in self.spacing_um)

    @property
    def dims(self) -> tuple[int, int, int]:
        """(X, Y, Z) pixel counts."""
        Z, Y, X = self.values.shape
        return X, Y, Z

    def __eq__(self, other) -> bool:
        if not isinstance(other, Volume3D):
            return NotImplemented
        return (self.spacing_um == other.spacing_um
                and self.values.dtype == other.values.dtype
                and self.values.shape == other.values.shape
                and np.array_equal(self.values, other.values))


def slice_xz(vol: Volume3D, y: int) -> np.ndarray:
    """Extract the x-z plane at index y as a (Z, X) field."""
    X, Y, Z = vol.dims
    if not 0 <= y < Y:
        raise IndexError(f"y index {y} outside [0, {Y})")
    return np.ascontiguousarray(vol.values[:, y, :], dtype=np.float64)


def mip_y(vol: Volume3D) -> np.ndarray:
    """Maximum intensity projection along y, as a (Z, X) field."""
    return np.ascontiguousarray(vol.values.max(axis=1), dtype=np.float64)


def threshold(field, t: float) -> np.ndarray:
    """Binary mask: 1 where field >= t (inclusive, so p == t is foreground)."""
    arr = as_field2d(field)
    return (arr >= t).astype(np.uint8)
