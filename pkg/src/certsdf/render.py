"""Ray-marched volume rendering of a density field.

Pinhole cameras cast one ray per pixel center; the rendering integral is
discretized with fixed-step midpoint quadrature into the standard
alpha-compositing weights.  Colors are a flat albedo modulated by opacity
over a white background, which keeps synthetic-fixture PSNR meaningful
without a radiance field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

BACKGROUND_DEPTH = math.inf
DEFAULT_ALBEDO = (0.25, 0.25, 0.25)


@dataclass(eq=False)
class Camera:
    """Pinhole camera: pixel dims, focal length in pixels, camera-to-world pose."""

    width: int
    height: int
    focal: float
    rotation: np.ndarray
    translation: np.ndarray
    t_near: float
    t_far: float

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not self.focal > 0:
            raise ValueError(f"focal must be > 0, got {self.focal}")
        if not 0 <= self.t_near < self.t_far:
            raise ValueError(f"need 0 <= t_near < t_far, got {self.t_near}, {self.t_far}")
        err = np.max(np.abs(self.rotation @ self.rotation.T - np.eye(3)))
        if err > 1e-9:
            raise ValueError(f"rotation is not orthonormal (deviation {err:.2e})")
        if np.linalg.det(self.rotation) < 0:
            raise ValueError("rotation must have determinant +1")

    def pose34(self):
        """Row-major 3x4 [R|t] as a flat list of 12 numbers."""
        return np.hstack([self.rotation, self.translation[:, None]]).reshape(-1).tolist()


@dataclass(eq=False)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_near: float
    t_far: float

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.direction = np.asarray(self.direction, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(self.direction)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"ray direction must be unit length, |d| = {norm!r}")


@dataclass(eq=False)
class RenderedImage:
    width: int
    height: int
    opacity: np.ndarray   # (H, W) in [0, 1]
    depth: np.ndarray     # (H, W), BACKGROUND_DEPTH where opacity < 0.5
    color: np.ndarray     # (H, W, 3) in [0, 1]


def _pixel_directions(camera):
    """Unit directions in world space for every pixel center, shape (H, W, 3)."""
    i = np.arange(camera.width, dtype=np.float64)
    j = np.arange(camera.height, dtype=np.float64)
    ii, jj = np.meshgrid(i, j, indexing="xy")
    # camera frame: x right, y up, looking along -z
    dirs = np.stack([
        (ii + 0.5 - 0.5 * camera.width) / camera.focal,
        -(jj + 0.5 - 0.5 * camera.height) / camera.focal,
        -np.ones_like(ii),
    ], axis=-1)
    dirs = dirs @ camera.rotation.T
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return dirs


def generate_rays(camera):
    """One ray per pixel through the pixel center, row-major pixel order."""
    dirs = _pixel_directions(camera).reshape(-1, 3)
    return [Ray(camera.translation.copy(), d, camera.t_near, camera.t_far)
            for d in dirs]


def _march_batch(origins, directions, t_near, t_far, density_field, step):
    """Quadrature over a batch of rays sharing [t_near, t_far].

    Returns (opacity (N,), depth (N,), transmittance (N, n+1), ts (n,)).
    The transmittance rows start at 1 and end with the post-march value.
    """
    span = t_far - t_near
    n = int(math.floor(span / step + 1e-9)) if span > 0 else 0
    n_rays = origins.shape[0]
    if n <= 0:
        return (np.zeros(n_rays), np.full(n_rays, BACKGROUND_DEPTH),
                np.ones((n_rays, 1)), np.empty(0))
    ts = t_near + (np.arange(n) + 0.5) * step
    pts = origins[:, None, :] + directions[:, None, :] * ts[None, :, None]
    dens = np.asarray(density_field(pts.reshape(-1, 3)), dtype=np.float64)
    dens = dens.reshape(n_rays, n)
    alpha = 1.0 - np.exp(-dens * step)
    trans = np.ones((n_rays, n + 1))
    np.cumprod(1.0 - alpha, axis=1, out=trans[:, 1:])
    weights = trans[:, :-1] * alpha
    opacity = weights.sum(axis=1)
    depth = (weights * ts).sum(axis=1) / np.maximum(opacity, 1e-8)
    depth = np.where(opacity < 0.5, BACKGROUND_DEPTH, depth)
    return opacity, depth, trans, ts


def march_ray(ray, density_field, step):
    """March a single ray; returns (opacity, depth, transmittance trace).

    The trace has one leading 1.0 plus one entry per sample.  A ray with
    t_far <= t_near is empty: opacity 0, background depth.
    """
    if step <= 0:
        raise ValueError(f"step must be > 0, got {step}")
    opacity, depth, trans, _ = _march_batch(
        ray.origin[None, :], ray.direction[None, :],
        ray.t_near, ray.t_far, density_field, step)
    return float(opacity[0]), float(depth[0]), trans[0]


def render(camera, density_field, step, albedo=DEFAULT_ALBEDO):
    """Render opacity/depth/color maps for every pixel of the camera."""
    if step <= 0:
        raise ValueError(f"step must be > 0, got {step}")
    dirs = _pixel_directions(camera).reshape(-1, 3)
    origins = np.broadcast_to(camera.translation, dirs.shape)
    opacity, depth, _, _ = _march_batch(
        origins, dirs, camera.t_near, camera.t_far, density_field, step)
    h, w = camera.height, camera.width
    opacity = opacity.reshape(h, w)
    depth = depth.reshape(h, w)
    albedo = np.asarray(albedo, dtype=np.float64).reshape(3)
    color = albedo[None, None, :] * opacity[..., None] + (1.0 - opacity[..., None])
    return RenderedImage(w, h, opacity, depth, np.clip(color, 0.0, 1.0))


def density_field_from_grid(smoothed, transfer_config):
    """Vectorized density(x) callable backed by a smoothed occupancy grid."""
    from .grid import sample_trilinear
    from .transfer import density as density_map

    def field(points):
        fhat = sample_trilinear(smoothed.grid, points)
        return density_map(fhat, transfer_config)

    return field


def look_at_camera(eye, target, up, width, height, focal, t_near, t_far):
    """Camera at ``eye`` looking at ``target`` (camera x right, y up, -z forward)."""
    eye = np.asarray(eye, dtype=np.float64)
    backward = eye - np.asarray(target, dtype=np.float64)
    backward /= np.linalg.norm(backward)
    right = np.cross(np.asarray(up, dtype=np.float64), backward)
    right /= np.linalg.norm(right)
    true_up = np.cross(backward, right)
    rotation = np.stack([right, true_up, backward], axis=1)
    return Camera(width, height, focal, rotation, eye, t_near, t_far)


# Image and camera file I/O.

def write_ppm(path, color):
    """Binary P6 PPM with 8-bit channels; bit-exact across reruns."""
    arr = np.asarray(color, dtype=np.float64)
    data = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(data.tobytes())


def read_ppm(path):
    """Read a binary P6 PPM back into a float (H, W, 3) array in [0, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    data = np.frombuffer(parts[4][:w * h * 3], dtype=np.uint8)
    if data.size != w * h * 3:
        raise ValueError(f"{path}: truncated PPM payload")
    return data.reshape(h, w, 3).astype(np.float64) / float(maxval)


def write_png(path, color):
    arr = np.round(np.clip(np.asarray(color), 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def write_depth_png(path, depth, t_near, t_far):
    """16-bit grayscale PNG; background (infinite) depth maps to the far plane."""
    d = np.asarray(depth, dtype=np.float64)
    norm = (d - t_near) / max(t_far - t_near, 1e-300)
    norm = np.where(np.isfinite(d), np.clip(norm, 0.0, 1.0), 1.0)
    data = np.round(norm * 65535.0).astype(np.uint16)
    Image.fromarray(data, mode="I;16").save(path)


def write_depth_raw(path, depth):
    """Raw little-endian f32 dump of the depth map, row-major."""
    np.asarray(depth, dtype="<f4").tofile(path)


def save_camera(path, camera):
    doc = {
        "width": camera.width,
        "height": camera.height,
        "focal": camera.focal,
        "pose": camera.pose34(),
        "t_near": camera.t_near,
        "t_far": camera.t_far,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_camera(path):
    with open(path) as fh:
        doc = json.load(fh)
    pose = np.asarray(doc["pose"], dtype=np.float64).reshape(3, 4)
    return Camera(int(doc["width"]), int(doc["height"]), float(doc["focal"]),
                  pose[:, :3], pose[:, 3], float(doc["t_near"]), float(doc["t_far"]))


def load_transforms_cameras(path, width, height, t_near, t_far):
    """Load synthetic-scene ``transforms``-style cameras (FOV + 4x4 matrices)."""
    with open(path) as fh:
        doc = json.load(fh)
    focal = 0.5 * width / math.tan(0.5 * float(doc["camera_angle_x"]))
    cams = []
    for frame in doc["frames"]:
        m = np.asarray(frame["transform_matrix"], dtype=np.float64).reshape(4, 4)
        cams.append(Camera(width, height, focal, m[:3, :3], m[:3, 3], t_near, t_far))
    return cams
