"""Voxel grids: clamped scalar fields over an axis-aligned box, with trilinear evaluation."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

GRID_MAGIC = b"CSDF"
GRID_TEXT_MAGIC = "CSDF-TEXT"
GRID_FORMAT_VERSION = 1
VALUE_TAG_F32 = 0
_HEADER_SIZE = 64


class VoxelGrid:
    """Scalar field sampled at voxel centers of a uniform axis-aligned lattice.

    ``origin`` is the world position of the center of voxel (0, 0, 0) and
    ``spacing`` the (cubic) voxel edge length.  ``values`` has shape
    ``(nx, ny, nz)``; occupancy grids clamp every stored value to [0, 1].
    The value array is frozen after construction; derive modified grids via
    :meth:`with_values`.
    """

    def __init__(self, values, origin, spacing, occupancy=False):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3:
            raise ValueError(f"values must be 3-d, got shape {values.shape}")
        if any(n < 2 for n in values.shape):
            raise ValueError(f"every grid axis needs >= 2 voxels, got {values.shape}")
        spacing = float(spacing)
        if not spacing > 0:
            raise ValueError(f"spacing must be > 0, got {spacing}")
        origin = np.asarray(origin, dtype=np.float64).reshape(3).copy()
        if not np.all(np.isfinite(origin)):
            raise ValueError(f"origin must be finite, got {origin}")
        if occupancy:
            values = np.clip(values, 0.0, 1.0)
        else:
            values = values.copy()
        values.flags.writeable = False
        origin.flags.writeable = False
        self.values = values
        self.origin = origin
        self.spacing = spacing
        self.occupancy = bool(occupancy)

    @property
    def dims(self):
        return self.values.shape

    @property
    def bounds_min(self):
        return self.origin - 0.5 * self.spacing

    @property
    def bounds_max(self):
        dims = np.asarray(self.dims, dtype=np.float64)
        return self.origin + self.spacing * (dims - 1.0) + 0.5 * self.spacing

    def axis_centers(self, axis):
        """World coordinates of voxel centers along one axis."""
        return self.origin[axis] + self.spacing * np.arange(self.dims[axis])

    def voxel_centers(self):
        """(nx, ny, nz, 3) array of all voxel center positions."""
        xs, ys, zs = (self.axis_centers(a) for a in range(3))
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        return np.stack([gx, gy, gz], axis=-1)

    def with_values(self, values):
        """New grid with the same geometry and fresh values (clamped if occupancy)."""
        return VoxelGrid(values, self.origin, self.spacing, occupancy=self.occupancy)

    def is_binary(self, tol=0.0):
        v = self.values
        return bool(np.all((np.abs(v) <= tol) | (np.abs(v - 1.0) <= tol)))

    def __repr__(self):
        return (f"VoxelGrid(dims={self.dims}, origin={tuple(self.origin)}, "
                f"spacing={self.spacing}, occupancy={self.occupancy})")


def centered_geometry(dims, extent=3.0):
    """Origin and spacing so the grid's bounding box is a cube of ``extent`` at 0.

    Returns (origin, spacing) for ``dims`` voxels per axis.  The default
    extent of 3 world units matches the synthetic-scene convention used by
    the fixtures (objects inside [-1.5, 1.5]^3).
    """
    if isinstance(dims, int):
        dims = (dims, dims, dims)
    spacing = float(extent) / max(dims)
    origin = np.full(3, -0.5 * float(extent) + 0.5 * spacing)
    return origin, spacing


# Analytic occupancy shapes (shared with the ground-truth oracles).

@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float

    def __post_init__(self):
        if not (np.all(np.isfinite(self.center)) and np.isfinite(self.radius)):
            raise ValueError("sphere parameters must be finite")
        if self.radius <= 0:
            raise ValueError(f"sphere radius must be > 0, got {self.radius}")

    def contains(self, pts):
        d = np.asarray(pts, dtype=np.float64) - np.asarray(self.center, dtype=np.float64)
        return np.einsum("...i,...i->...", d, d) <= self.radius ** 2


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box corners must be finite")
        if np.any(lo >= hi):
            raise ValueError(f"box needs lo < hi per axis, got {self.lo} / {self.hi}")

    def contains(self, pts):
        pts = np.asarray(pts, dtype=np.float64)
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        return np.all((pts >= lo) & (pts <= hi), axis=-1)


@dataclass(frozen=True)
class Halfspace:
    normal: tuple
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        if not (np.all(np.isfinite(n)) and np.isfinite(self.offset)):
            raise ValueError("halfspace parameters must be finite")
        if np.linalg.norm(n) == 0:
            raise ValueError("halfspace normal must be nonzero")

    def unit_normal(self):
        n = np.asarray(self.normal, dtype=np.float64)
        return n / np.linalg.norm(n)

    def contains(self, pts):
        # occupied side: dot(unit_normal, p) >= offset (offset in world units)
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.unit_normal() >= self.offset


def make_analytic_grid(shape, dims, origin=None, spacing=None):
    """Binary occupancy grid of an analytic shape (1 where the voxel center is inside)."""
    if isinstance(dims, int):
        dims = (dims, dims, dims)
    if origin is None or spacing is None:
        default_origin, default_spacing = centered_geometry(dims)
        origin = default_origin if origin is None else origin
        spacing = default_spacing if spacing is None else spacing
    probe = VoxelGrid(np.zeros(dims), origin, spacing, occupancy=True)
    centers = probe.voxel_centers()
    inside = shape.contains(centers.reshape(-1, 3)).reshape(dims)
    return VoxelGrid(inside.astype(np.float64), origin, spacing, occupancy=True)


def sample_trilinear(grid, points):
    """Trilinear interpolation of grid values at world points.

    Points are interpolated from the 8 lattice neighbors; neighbors falling
    outside the lattice contribute the fill value 0 (empty space), so the
    field tapers continuously to 0 within half a voxel beyond the bounding
    box and is exactly 0 farther out.

    Accepts a single (3,) point or an (..., 3) array; returns matching shape.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    lattice = (pts - grid.origin) / grid.spacing
    base = np.floor(lattice).astype(np.int64)
    frac = lattice - base

    nx, ny, nz = grid.dims
    out = np.zeros(pts.shape[0], dtype=np.float64)
    for dx in (0, 1):
        ix = base[:, 0] + dx
        wx = frac[:, 0] if dx else 1.0 - frac[:, 0]
        okx = (ix >= 0) & (ix < nx)
        for dy in (0, 1):
            iy = base[:, 1] + dy
            wy = frac[:, 1] if dy else 1.0 - frac[:, 1]
            okxy = okx & (iy >= 0) & (iy < ny)
            for dz in (0, 1):
                iz = base[:, 2] + dz
                wz = frac[:, 2] if dz else 1.0 - frac[:, 2]
                ok = okxy & (iz >= 0) & (iz < nz)
                if not np.any(ok):
                    continue
                w = wx * wy * wz
                sel = np.nonzero(ok)[0]
                out[sel] += w[sel] * grid.values[ix[sel], iy[sel], iz[sel]]
    return out[0] if single else out.reshape(np.asarray(points).shape[:-1])


def hard_classify(grid, points):
    """Binary occupancy classifier: 1 where the trilinear sample is >= 1/2.

    The tie at exactly 0.5 counts as occupied so the hard classifier agrees
    with the sigmoid surrogate's midpoint.
    """
    s = sample_trilinear(grid, points)
    return (np.asarray(s) >= 0.5).astype(np.int64) if np.ndim(s) else int(s >= 0.5)


# Grid container format: 64-byte binary header + little-endian f32 values in
# x-fastest order, plus a plain-text variant for debugging.

_HEADER_STRUCT = struct.Struct("<4sI3I3ddI")


def save_grid(path, grid, text=False):
    """Write a grid file (binary by default, plain-text variant if ``text``)."""
    flat = np.asarray(grid.values, dtype=np.float32).ravel(order="F")
    nx, ny, nz = grid.dims
    if text:
        with open(path, "w") as fh:
            fh.write(f"{GRID_TEXT_MAGIC} {GRID_FORMAT_VERSION}\n")
            fh.write(f"dims {nx} {ny} {nz}\n")
            fh.write("origin {!r} {!r} {!r}\n".format(*grid.origin))
            fh.write(f"spacing {grid.spacing!r}\n")
            fh.write("values f32\n")
            for v in flat:
                fh.write(f"{float(v)!r}\n")
        return
    header = _HEADER_STRUCT.pack(
        GRID_MAGIC, GRID_FORMAT_VERSION, nx, ny, nz,
        grid.origin[0], grid.origin[1], grid.origin[2],
        grid.spacing, VALUE_TAG_F32,
    )
    header += b"\x00" * (_HEADER_SIZE - len(header))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(flat.tobytes())


def load_grid(path):
    """Read a grid file saved by :func:`save_grid` (either variant)."""
    with open(path, "rb") as fh:
        head = fh.read(len(GRID_TEXT_MAGIC))
        fh.seek(0)
        if head.startswith(GRID_MAGIC) and not head.startswith(GRID_TEXT_MAGIC.encode()):
            raw = fh.read(_HEADER_SIZE)
            if len(raw) < _HEADER_SIZE:
                raise ValueError(f"{path}: truncated grid header")
            magic, version, nx, ny, nz, ox, oy, oz, spacing, tag = (
                _HEADER_STRUCT.unpack(raw[:_HEADER_STRUCT.size]))
            if magic != GRID_MAGIC:
                raise ValueError(f"{path}: bad magic {magic!r}")
            if version != GRID_FORMAT_VERSION:
                raise ValueError(f"{path}: unsupported version {version}")
            if tag != VALUE_TAG_F32:
                raise ValueError(f"{path}: unsupported value type tag {tag}")
            count = nx * ny * nz
            flat = np.frombuffer(fh.read(4 * count), dtype="<f4")
            if flat.size != count:
                raise ValueError(f"{path}: expected {count} values, got {flat.size}")
            values = flat.astype(np.float64).reshape((nx, ny, nz), order="F")
            return VoxelGrid(values, (ox, oy, oz), spacing)
    # plain-text variant
    with open(path, "r") as fh:
        magic_line = fh.readline().split()
        if not magic_line or magic_line[0] != GRID_TEXT_MAGIC:
            raise ValueError(f"{path}: not a grid file")
        if int(magic_line[1]) != GRID_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported version {magic_line[1]}")
        fields = {}
        for _ in range(4):
            parts = fh.readline().split()
            fields[parts[0]] = parts[1:]
        nx, ny, nz = (int(v) for v in fields["dims"])
        origin = tuple(float(v) for v in fields["origin"])
        spacing = float(fields["spacing"][0])
        if fields["values"] != ["f32"]:
            raise ValueError(f"{path}: unsupported value type {fields['values']}")
        flat = np.array([float(fh.readline()) for _ in range(nx * ny * nz)],
                        dtype=np.float32)
    values = flat.astype(np.float64).reshape((nx, ny, nz), order="F")
    return VoxelGrid(values, origin, spacing)
