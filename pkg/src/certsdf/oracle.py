"""Independent ground-truth generators for tests and acceptance runs.

Closed-form signed distances for the analytic shapes, plus an exact
Euclidean distance transform on binary grids.  Sign convention throughout:
positive inside occupied space, matching the certification module.
"""

from __future__ import annotations

import warnings

import numpy as np

from .grid import Box, Halfspace, Sphere, VoxelGrid


def analytic_sdf(shape, points):
    """Exact signed distance to the shape surface, positive inside."""
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if isinstance(shape, Sphere):
        d = shape.radius - np.linalg.norm(pts - np.asarray(shape.center), axis=-1)
    elif isinstance(shape, Box):
        lo = np.asarray(shape.lo, dtype=np.float64)
        hi = np.asarray(shape.hi, dtype=np.float64)
        center = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        q = np.abs(pts - center) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        d = -(outside + inside)
    elif isinstance(shape, Halfspace):
        d = pts @ shape.unit_normal() - shape.offset
    else:
        raise TypeError(f"unsupported shape {type(shape).__name__}")
    return float(d[0]) if single else d.reshape(np.asarray(points).shape[:-1])


def _edt_1d_sq(f):
    """Felzenszwalb-Huttenlocher lower envelope of parabolas, squared distances.

    Sites with infinite value contribute no parabola; an all-infinite input
    stays infinite.
    """
    n = len(f)
    v = np.zeros(n, dtype=np.int64)   # parabola sites
    z = np.empty(n + 1)               # envelope breakpoints
    k = -1
    for q in range(n):
        if f[q] == np.inf:
            continue
        while k >= 0:
            p = v[k]
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * q - 2.0 * p)
            if s > z[k]:
                break
            k -= 1
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -np.inf
        else:
            k += 1
            v[k] = q
            z[k] = s
        z[k + 1] = np.inf
    if k < 0:
        return np.full(n, np.inf)
    d = np.empty(n)
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        p = v[k]
        d[q] = (q - p) ** 2 + f[p]
    return d


def _edt_sq_to_features(feature_mask):
    """Squared voxel distance from every voxel to the nearest True voxel."""
    d = np.where(feature_mask, 0.0, np.inf)
    for axis in range(3):
        moved = np.moveaxis(d, axis, -1)
        flat = moved.reshape(-1, moved.shape[-1])
        for row in range(flat.shape[0]):
            flat[row] = _edt_1d_sq(flat[row])
        d = np.moveaxis(flat.reshape(moved.shape), -1, axis)
    return d


def exact_distance_transform(grid):
    """Signed exact Euclidean distance to the nearest opposite-class voxel center.

    Input values must be binary {0, 1}.  Occupied voxels get +distance to
    the nearest empty voxel, empty voxels -distance to the nearest occupied
    one, in world units.  A grid with only one class present saturates to
    the grid diagonal (with a warning), since no opposite voxel exists.
    """
    values = grid.values
    if not grid.is_binary():
        raise ValueError("exact_distance_transform expects values in {0, 1}")
    occ = values >= 0.5
    diag = grid.spacing * float(np.linalg.norm(grid.dims))
    if occ.all() or (~occ).all():
        warnings.warn("exact_distance_transform: grid has a single class; "
                      "distances saturate to the grid diagonal")
        fill = diag if occ.all() else -diag
        return VoxelGrid(np.full(grid.dims, fill), grid.origin, grid.spacing)
    d_to_occ = np.sqrt(_edt_sq_to_features(occ))
    d_to_empty = np.sqrt(_edt_sq_to_features(~occ))
    signed = np.where(occ, d_to_empty, -d_to_occ) * grid.spacing
    return VoxelGrid(signed, grid.origin, grid.spacing)


def brute_force_distance_transform(grid):
    """O(n^2) reference for :func:`exact_distance_transform`, small grids only."""
    values = grid.values
    if not grid.is_binary():
        raise ValueError("brute_force_distance_transform expects values in {0, 1}")
    occ = values >= 0.5
    centers = grid.voxel_centers().reshape(-1, 3)
    occ_flat = occ.reshape(-1)
    pts_occ = centers[occ_flat]
    pts_empty = centers[~occ_flat]
    if len(pts_occ) == 0 or len(pts_empty) == 0:
        return exact_distance_transform(grid)
    out = np.empty(len(centers))
    for i, p in enumerate(centers):
        others = pts_empty if occ_flat[i] else pts_occ
        dmin = np.min(np.linalg.norm(others - p, axis=1))
        out[i] = dmin if occ_flat[i] else -dmin
    return VoxelGrid(out.reshape(grid.dims), grid.origin, grid.spacing)


def sample_sphere_surface(center, radius, n, seed=0):
    """n points drawn uniformly on a sphere surface (deterministic given seed)."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(int(n), 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return np.asarray(center, dtype=np.float64) + radius * v
