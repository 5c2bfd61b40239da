"""Volumetric scalar fields: loading, normalization, and off-grid sampling.

A volume on disk is a headerless raw little-endian array plus a JSON sidecar:

    {"dims": [nx, ny, nz], "dtype": "uint8|uint16|float32",
     "spacing": [sx, sy, sz], "value_range": [min, max]}

Memory order is x-fastest. Values are normalized to [0, 1] using the
sidecar-declared value_range so renders are reproducible across crops.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

_DTYPES = {
    "uint8": np.uint8,
    "uint16": np.uint16,
    "float32": np.float32,
}


class VolumeFormatError(ValueError):
    """Raised when a raw file or sidecar does not match its declared layout."""


class DegenerateVolumeError(ValueError):
    """Raised for constant volumes (value_range collapses)."""


@dataclass(frozen=True)
class VolumeMeta:
    dims: tuple[int, int, int]
    dtype: str
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    value_range: tuple[float, float] = (0.0, 1.0)

    def validate(self) -> None:
        if self.dtype not in _DTYPES:
            raise VolumeFormatError(f"unsupported dtype {self.dtype!r}")
        if len(self.dims) != 3 or any(int(d) < 2 for d in self.dims):
            raise VolumeFormatError(f"dims must be 3 axes, each >= 2, got {self.dims}")
        if any(s <= 0 for s in self.spacing):
            raise VolumeFormatError(f"spacing must be positive, got {self.spacing}")
        lo, hi = self.value_range
        if not lo < hi:
            raise DegenerateVolumeError(
                f"value_range must satisfy min < max, got {self.value_range}"
            )

    @staticmethod
    def from_sidecar(path: str) -> "VolumeMeta":
        with open(path) as f:
            d = json.load(f)
        meta = VolumeMeta(
            dims=tuple(int(x) for x in d["dims"]),
            dtype=str(d["dtype"]),
            spacing=tuple(float(x) for x in d.get("spacing", (1.0, 1.0, 1.0))),
            value_range=tuple(float(x) for x in d["value_range"]),
        )
        meta.validate()
        return meta

    def to_sidecar(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(
                {
                    "dims": list(self.dims),
                    "dtype": self.dtype,
                    "spacing": list(self.spacing),
                    "value_range": list(self.value_range),
                },
                f,
            )


class VolumeGrid:
    """Normalized scalar field. Immutable after construction; safe for
    unsynchronized concurrent reads."""

    def __init__(self, values: np.ndarray, spacing=(1.0, 1.0, 1.0),
                 source_dtype: str = "float32",
                 value_range: tuple[float, float] = (0.0, 1.0)):
        values = np.asarray(values, dtype=np.float32)
        if values.ndim != 3:
            raise VolumeFormatError("values must be a 3D array indexed [z, y, x]")
        nz, ny, nx = values.shape
        if min(nx, ny, nz) < 2:
            raise VolumeFormatError("each axis needs at least 2 voxels")
        if float(values.min()) < 0.0 or float(values.max()) > 1.0:
            raise VolumeFormatError("values must already be normalized to [0, 1]")
        self._values = values
        self._values.setflags(write=False)
        self.spacing = tuple(float(s) for s in spacing)
        self.source_dtype = source_dtype
        self.value_range = tuple(float(v) for v in value_range)

    @property
    def dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self._values.shape
        return (nx, ny, nz)

    @property
    def values(self) -> np.ndarray:
        """Array indexed [z, y, x] (x-fastest memory order)."""
        return self._values

    @property
    def extent(self) -> np.ndarray:
        """Physical size of the voxel-center bounding box per axis."""
        nx, ny, nz = self.dims
        sx, sy, sz = self.spacing
        return np.array([(nx - 1) * sx, (ny - 1) * sy, (nz - 1) * sz])

    @property
    def center(self) -> np.ndarray:
        return self.extent / 2.0

    @property
    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.extent) / 2.0)

    def denormalize(self, v: np.ndarray) -> np.ndarray:
        lo, hi = self.value_range
        return np.asarray(v) * (hi - lo) + lo


def load_volume(raw_path: str, meta: VolumeMeta) -> VolumeGrid:
    """Load a headerless raw volume and rescale it to [0, 1]."""
    meta.validate()
    nx, ny, nz = meta.dims
    dtype = np.dtype(_DTYPES[meta.dtype]).newbyteorder("<")
    expected = nx * ny * nz * dtype.itemsize
    actual = os.path.getsize(raw_path)
    if actual != expected:
        raise VolumeFormatError(
            f"{raw_path}: file is {actual} bytes, dims/dtype require {expected}"
        )
    raw = np.fromfile(raw_path, dtype=dtype).astype(np.float64)
    lo, hi = meta.value_range
    values = np.clip((raw - lo) / (hi - lo), 0.0, 1.0)
    values = values.reshape(nz, ny, nx).astype(np.float32)
    return VolumeGrid(values, spacing=meta.spacing, source_dtype=meta.dtype,
                      value_range=meta.value_range)


def save_volume(vol_values: np.ndarray, meta: VolumeMeta, raw_path: str) -> None:
    """Write raw values (in the source dtype's units) and the sidecar."""
    meta.validate()
    nx, ny, nz = meta.dims
    dtype = np.dtype(_DTYPES[meta.dtype]).newbyteorder("<")
    arr = np.asarray(vol_values).reshape(nz, ny, nx).astype(dtype)
    arr.tofile(raw_path)
    meta.to_sidecar(raw_path + ".json")


def sample_trilinear(vol: VolumeGrid, p: np.ndarray) -> np.ndarray:
    """Trilinear interpolation at world-space points; 0 outside the grid.

    `p` has shape (..., 3) ordered (x, y, z); returns shape (...,).
    """
    p = np.asarray(p, dtype=np.float64)
    sx, sy, sz = vol.spacing
    g = p / np.array([sx, sy, sz])  # voxel coordinates
    nx, ny, nz = vol.dims

    inside = np.all((g >= 0.0) & (g <= np.array([nx - 1, ny - 1, nz - 1])), axis=-1)
    gc = np.clip(g, 0.0, np.array([nx - 1, ny - 1, nz - 1]))
    i0 = np.minimum(np.floor(gc).astype(np.int64), np.array([nx - 2, ny - 2, nz - 2]))
    f = gc - i0
    x0, y0, z0 = i0[..., 0], i0[..., 1], i0[..., 2]
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]

    v = vol.values
    c000 = v[z0, y0, x0]
    c100 = v[z0, y0, x0 + 1]
    c010 = v[z0, y0 + 1, x0]
    c110 = v[z0, y0 + 1, x0 + 1]
    c001 = v[z0 + 1, y0, x0]
    c101 = v[z0 + 1, y0, x0 + 1]
    c011 = v[z0 + 1, y0 + 1, x0]
    c111 = v[z0 + 1, y0 + 1, x0 + 1]

    c00 = c000 * (1 - fx) + c100 * fx
    c10 = c010 * (1 - fx) + c110 * fx
    c01 = c001 * (1 - fx) + c101 * fx
    c11 = c011 * (1 - fx) + c111 * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    out = c0 * (1 - fz) + c1 * fz
    return np.where(inside, out, 0.0)


def gradient_at(vol: VolumeGrid, p: np.ndarray) -> np.ndarray:
    """Central-difference gradient of the sampled field; zero out of bounds.

    Step is one voxel spacing per axis. Shape (..., 3).
    """
    p = np.asarray(p, dtype=np.float64)
    sx, sy, sz = vol.spacing
    nx, ny, nz = vol.dims
    ex = np.array([sx, 0.0, 0.0])
    ey = np.array([0.0, sy, 0.0])
    ez = np.array([0.0, 0.0, sz])
    gx = (sample_trilinear(vol, p + ex) - sample_trilinear(vol, p - ex)) / (2 * sx)
    gy = (sample_trilinear(vol, p + ey) - sample_trilinear(vol, p - ey)) / (2 * sy)
    gz = (sample_trilinear(vol, p + ez) - sample_trilinear(vol, p - ez)) / (2 * sz)
    grad = np.stack([gx, gy, gz], axis=-1)
    hi = np.array([(nx - 1) * sx, (ny - 1) * sy, (nz - 1) * sz])
    inside = np.all((p >= 0.0) & (p <= hi), axis=-1)
    return np.where(inside[..., None], grad, 0.0)


def two_shell_volume(n: int = 32, spacing=(1.0, 1.0, 1.0)) -> VolumeGrid:
    """Synthetic analytic test volume: two concentric spherical shells with
    distinct scalar bands, smooth falloff."""
    ax = (np.arange(n) - (n - 1) / 2.0) / ((n - 1) / 2.0)
    z, y, x = np.meshgrid(ax, ax, ax, indexing="ij")
    r = np.sqrt(x * x + y * y + z * z)
    inner = 0.75 * np.exp(-((r - 0.35) ** 2) / (2 * 0.08 ** 2))
    outer = 0.45 * np.exp(-((r - 0.75) ** 2) / (2 * 0.06 ** 2))
    values = np.clip(inner + outer, 0.0, 1.0).astype(np.float32)
    return VolumeGrid(values, spacing=spacing, source_dtype="float32",
                      value_range=(0.0, 1.0))


def solid_cube_volume(n: int = 32, value: float = 1.0,
                      spacing=(1.0, 1.0, 1.0)) -> VolumeGrid:
    """Constant-interior cube with a one-voxel empty border (a solid target
    for silhouette and attenuation tests)."""
    values = np.zeros((n, n, n), dtype=np.float32)
    values[1:-1, 1:-1, 1:-1] = value
    return VolumeGrid(values, spacing=spacing, source_dtype="float32",
                      value_range=(0.0, 1.0))
