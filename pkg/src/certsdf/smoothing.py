"""Gaussian smoothing of occupancy grids by separable convolution.

The smoothed field equals the expected classification of the grid under
isotropic Gaussian input noise, so evaluating it by three 1-d convolution
passes replaces per-point Monte-Carlo sampling.  Boundary reads use the
fill value 0, consistent with the grid module's out-of-domain semantics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import VoxelGrid


@dataclass(frozen=True)
class SmoothingConfig:
    """Gaussian standard deviation in world units plus kernel cutoff in sigmas."""

    sigma_world: float
    truncation: float = 4.0

    def __post_init__(self):
        if not self.sigma_world > 0:
            raise ValueError(f"sigma_world must be > 0, got {self.sigma_world}")
        if not self.truncation >= 2:
            raise ValueError(f"truncation must be >= 2, got {self.truncation}")

    @classmethod
    def from_voxels(cls, sigma_voxels, spacing, truncation=4.0):
        return cls(sigma_world=float(sigma_voxels) * float(spacing), truncation=truncation)

    def sigma_voxels(self, spacing):
        return self.sigma_world / float(spacing)


@dataclass(frozen=True)
class SmoothedGrid:
    """A smoothed occupancy field together with the config that produced it."""

    grid: VoxelGrid
    config: SmoothingConfig

    @property
    def sigma_world(self):
        return self.config.sigma_world


def gaussian_kernel_1d(sigma_voxels, truncation=4.0):
    """Normalized Gaussian weights at integer offsets with |k| <= truncation*sigma.

    The kernel is symmetric, odd-length, and renormalized to sum exactly
    to 1; when truncation*sigma < 1 it degenerates to the delta kernel.
    """
    sigma_voxels = float(sigma_voxels)
    if not sigma_voxels > 0:
        raise ValueError(f"sigma_voxels must be > 0, got {sigma_voxels}")
    radius = int(truncation * sigma_voxels)
    if radius == 0:
        return np.array([1.0])
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * (k / sigma_voxels) ** 2)
    return w / w.sum()


def _check_kernel_fits(kernel, dims):
    if len(kernel) > min(dims):
        raise ValueError(
            f"Gaussian kernel of {len(kernel)} taps exceeds the smallest grid axis "
            f"({min(dims)} voxels); lower sigma or raise the grid resolution.")


def _correlate_axis(values, kernel, axis):
    """1-d correlation along one axis with zero fill outside the array."""
    radius = len(kernel) // 2
    out = np.zeros_like(values)
    n = values.shape[axis]
    for tap, w in enumerate(kernel):
        k = tap - radius
        src = [slice(None)] * 3
        dst = [slice(None)] * 3
        src[axis] = slice(max(0, k), n + min(0, k))
        dst[axis] = slice(max(0, -k), n + min(0, -k))
        out[tuple(dst)] += w * values[tuple(src)]
    return out


def smooth(grid, config):
    """Convolve an occupancy grid with an isotropic Gaussian, separably.

    Applies the 1-d kernel along x, then y, then z; output dims equal input
    dims.  Values are clipped to [0, 1] only to absorb float rounding.
    """
    values = grid.values
    if np.any(values < 0) or np.any(values > 1):
        raise ValueError("smooth expects an occupancy grid with values in [0, 1]")
    kernel = gaussian_kernel_1d(config.sigma_voxels(grid.spacing), config.truncation)
    _check_kernel_fits(kernel, grid.dims)
    out = values
    for axis in range(3):
        out = _correlate_axis(out, kernel, axis)
    out = np.clip(out, 0.0, 1.0)
    return SmoothedGrid(VoxelGrid(out, grid.origin, grid.spacing, occupancy=True), config)


def smooth_direct_reference(grid, config):
    """Brute-force 3-d convolution with the full (non-separated) kernel.

    Test oracle for :func:`smooth`; the kernel is sampled from the 3-d
    Gaussian density directly rather than assembled from 1-d factors.
    """
    values = grid.values
    if np.any(values < 0) or np.any(values > 1):
        raise ValueError("smooth expects an occupancy grid with values in [0, 1]")
    sigma = config.sigma_voxels(grid.spacing)
    radius = int(config.truncation * sigma)
    _check_kernel_fits(np.zeros(2 * radius + 1), grid.dims)
    offsets = np.arange(-radius, radius + 1)
    kx, ky, kz = np.meshgrid(offsets, offsets, offsets, indexing="ij")
    kernel = np.exp(-0.5 * (kx ** 2 + ky ** 2 + kz ** 2) / sigma ** 2)
    kernel /= kernel.sum()

    nx, ny, nz = grid.dims
    out = np.zeros_like(values)
    for a in range(kernel.shape[0]):
        dx = offsets[a]
        sx = slice(max(0, dx), nx + min(0, dx))
        tx = slice(max(0, -dx), nx + min(0, -dx))
        for b in range(kernel.shape[1]):
            dy = offsets[b]
            sy = slice(max(0, dy), ny + min(0, dy))
            ty = slice(max(0, -dy), ny + min(0, -dy))
            for c in range(kernel.shape[2]):
                dz = offsets[c]
                sz = slice(max(0, dz), nz + min(0, dz))
                tz = slice(max(0, -dz), nz + min(0, -dz))
                out[tx, ty, tz] += kernel[a, b, c] * values[sx, sy, sz]
    out = np.clip(out, 0.0, 1.0)
    return SmoothedGrid(VoxelGrid(out, grid.origin, grid.spacing, occupancy=True), config)


def smoothing_adjoint(gradient_values, grid_like, config):
    """Adjoint of :func:`smooth` applied to a gradient array.

    The Gaussian kernel is symmetric, so the adjoint of zero-fill
    convolution is convolution with the same kernel (again zero-filled).
    """
    kernel = gaussian_kernel_1d(config.sigma_voxels(grid_like.spacing), config.truncation)
    _check_kernel_fits(kernel, grid_like.dims)
    out = np.asarray(gradient_values, dtype=np.float64)
    for axis in range(3):
        out = _correlate_axis(out, kernel, axis)
    return out
