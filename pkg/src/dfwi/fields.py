"""Gridded-field types, velocity normalization, smoothing and the
velocity-to-density coupling used as the diffusion condition.

All field types are value-semantic: arrays are copied in and marked
read-only, so instances can be shared freely between workers.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

GARDNER_A = 310.0
GARDNER_B = 0.25


def _frozen_array(a, dtype=np.float64):
    out = np.ascontiguousarray(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class GridSpec:
    """Regular 2D mesh: nx columns (horizontal), nz rows (vertical, z down)."""

    nx: int
    nz: int
    dx: float
    dz: float

    def __post_init__(self):
        if self.nx < 8 or self.nz < 8:
            raise ValueError(f"grid must be at least 8x8, got {self.nx}x{self.nz}")
        if self.dx <= 0 or self.dz <= 0:
            raise ValueError("grid spacing must be positive")

    @property
    def shape(self):
        return (self.nz, self.nx)

    @property
    def extent_x(self):
        return (self.nx - 1) * self.dx

    @property
    def extent_z(self):
        return (self.nz - 1) * self.dz


def _check_field(grid, arr, name):
    if arr.shape != grid.shape:
        raise ValueError(f"{name} shape {arr.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")


@dataclass(frozen=True, eq=False)
class VelocityModel:
    """P-wave velocity on a regular grid, m/s, row-major (z outer, x inner)."""

    grid: GridSpec
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", _frozen_array(self.v))
        _check_field(self.grid, self.v, "velocity")
        if np.any(self.v <= 0):
            raise ValueError("velocity must be strictly positive")

    @classmethod
    def constant(cls, grid, value):
        return cls(grid, np.full(grid.shape, float(value)))

    def with_values(self, v):
        return VelocityModel(self.grid, v)


@dataclass(frozen=True, eq=False)
class DensityModel:
    """Bulk density on the same grid as its paired velocity model, kg/m^3."""

    grid: GridSpec
    rho: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rho", _frozen_array(self.rho))
        _check_field(self.grid, self.rho, "density")
        if np.any(self.rho <= 0):
            raise ValueError("density must be strictly positive")


@dataclass(frozen=True, eq=False)
class NormalizedField:
    """Dimensionless field in [-1, 1] tied to the affine map it came from."""

    grid: GridSpec
    x: np.ndarray
    v_min: float
    v_max: float
    n_clamped: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen_array(self.x))
        _check_field(self.grid, self.x, "normalized field")
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be < v_max")
        if np.any(np.abs(self.x) > 1.0 + 1e-12):
            raise ValueError("normalized values exceed [-1, 1]")


@dataclass(frozen=True)
class AcquisitionGeometry:
    """Surface acquisition: source/receiver x-positions (m) and depths (m)."""

    source_positions: tuple
    receiver_positions: tuple
    source_depth: float
    receiver_depth: float

    def __post_init__(self):
        object.__setattr__(self, "source_positions", tuple(float(p) for p in self.source_positions))
        object.__setattr__(self, "receiver_positions", tuple(float(p) for p in self.receiver_positions))
        if not self.source_positions or not self.receiver_positions:
            raise ValueError("source and receiver lists must be non-empty")
        if self.source_depth < 0 or self.receiver_depth < 0:
            raise ValueError("depths must be >= 0")
        if min(self.source_positions) < 0 or min(self.receiver_positions) < 0:
            raise ValueError("positions must be >= 0")

    def validate_against(self, grid):
        hi = grid.extent_x
        for p in self.source_positions + self.receiver_positions:
            if p > hi + 1e-9:
                raise ValueError(f"position {p} m outside grid extent {hi} m")
        for d in (self.source_depth, self.receiver_depth):
            if d > grid.extent_z + 1e-9:
                raise ValueError(f"depth {d} m outside grid extent {grid.extent_z} m")


def normalize(m, v_min, v_max):
    """Map velocity to [-1, 1] with the corpus-global affine map, clamping.

    Clamp events (values outside [v_min, v_max]) are counted on the result.
    """
    if not v_min < v_max:
        raise ValueError("v_min must be < v_max")
    x = 2.0 * (m.v - v_min) / (v_max - v_min) - 1.0
    n_clamped = int(np.count_nonzero((x < -1.0) | (x > 1.0)))
    x = np.clip(x, -1.0, 1.0)
    return NormalizedField(m.grid, x, float(v_min), float(v_max), n_clamped)


def denormalize(nf):
    """Exact affine inverse of :func:`normalize`, clamped to [v_min, v_max]."""
    v = (nf.x + 1.0) * 0.5 * (nf.v_max - nf.v_min) + nf.v_min
    v = np.clip(v, nf.v_min, nf.v_max)
    return VelocityModel(nf.grid, v)


def gaussian_smooth(m, sigma):
    """Separable Gaussian smoothing, kernel radius ceil(3*sigma), replicated edges."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return VelocityModel(m.grid, m.v)
    out = smooth_array(m.v, sigma)
    return VelocityModel(m.grid, out)


def smooth_array(a, sigma):
    """The raw filter behind :func:`gaussian_smooth` (works on any 2D array)."""
    if sigma == 0:
        return np.array(a, dtype=np.float64)
    return gaussian_filter(np.asarray(a, dtype=np.float64), sigma=sigma,
                           mode="nearest", radius=int(math.ceil(3.0 * sigma)))


def gardner_density(m, a=GARDNER_A, b=GARDNER_B):
    """Empirical power-law density rho = a * v**b (v in m/s, rho in kg/m^3)."""
    if np.any(m.v <= 0):
        raise ValueError("velocity must be positive for the density relation")
    rho = a * np.power(m.v, b)
    return DensityModel(m.grid, rho)


# --- raw field files: little-endian float32 + JSON sidecar ------------------

FIELD_SUFFIX = ".f32"


def _sidecar_path(path):
    path = str(path)
    if path.endswith(FIELD_SUFFIX):
        path = path[: -len(FIELD_SUFFIX)]
    return path + ".json"


def write_field(path, grid, values, kind):
    """Write a 2D field as raw little-endian float32 plus a JSON sidecar."""
    path = str(path)
    if not path.endswith(FIELD_SUFFIX):
        path += FIELD_SUFFIX
    arr = np.ascontiguousarray(values, dtype="<f4")
    if arr.shape != grid.shape:
        raise ValueError(f"values shape {arr.shape} does not match grid {grid.shape}")
    with open(path, "wb") as f:
        f.write(arr.tobytes())
    meta = {"nx": grid.nx, "nz": grid.nz, "dx": grid.dx, "dz": grid.dz, "kind": kind}
    with open(_sidecar_path(path), "w") as f:
        json.dump(meta, f)
    return path


def read_field(path):
    """Read a raw field file; returns (GridSpec, float64 array, kind)."""
    path = str(path)
    if not path.endswith(FIELD_SUFFIX):
        path += FIELD_SUFFIX
    with open(_sidecar_path(path)) as f:
        meta = json.load(f)
    grid = GridSpec(nx=int(meta["nx"]), nz=int(meta["nz"]),
                    dx=float(meta["dx"]), dz=float(meta["dz"]))
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != grid.nx * grid.nz:
        raise ValueError(f"{path}: expected {grid.nx * grid.nz} samples, found {raw.size}")
    return grid, raw.reshape(grid.shape).astype(np.float64), meta.get("kind", "unknown")
