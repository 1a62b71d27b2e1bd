"""Deterministic software renderer for isolated objects.

Perspective look-at camera with a 60 degree vertical field of view, white
background, and a z-buffer. Vertices are splatted as small discs; when
triangle faces are available they are rasterized with perspective-correct
per-vertex color interpolation. No lighting or shadows: output only needs
to be stable and recognizable, not photorealistic.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .core import ObjectInstance, as_vec3
from .geometry import CameraPose

logger = logging.getLogger(__name__)

VERTICAL_FOV_DEG = 60.0
BACKGROUND = 255          # white, all channels
NEAR_PLANE = 1e-6
SPLAT_RADIUS_FRACTION = 0.004
ELEVATION_DEG = 60.0      # elevation of the top/bottom attribute views


@dataclass
class RasterImage:
    """Row-major RGB image."""

    width: int
    height: int
    pixels: bytes

    def __post_init__(self):
        expected = self.width * self.height * 3
        if len(self.pixels) != expected:
            raise ValueError(f"pixel buffer has {len(self.pixels)} bytes, expected {expected}")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "RasterImage":
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
            raise ValueError("expected a (H, W, 3) uint8 array")
        return cls(width=arr.shape[1], height=arr.shape[0], pixels=arr.tobytes())

    def to_array(self) -> np.ndarray:
        return np.frombuffer(self.pixels, dtype=np.uint8).reshape(self.height, self.width, 3)

    @classmethod
    def load_png(cls, path) -> "RasterImage":
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
        return cls.from_array(arr)

    def save_png(self, path) -> None:
        Image.fromarray(self.to_array(), mode="RGB").save(path, format="PNG")

    def png_bytes(self) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(self.to_array(), mode="RGB").save(buf, format="PNG")
        return buf.getvalue()

    def downsample_gray(self, size: int = 32) -> np.ndarray:
        """Block-averaged grayscale thumbnail, flattened to (size*size,).

        Implemented with integer block boundaries so the result is exactly
        reproducible across platforms.
        """
        arr = self.to_array().astype(np.float64)
        gray = 0.299 * arr[:, :, 0] + 0.587 * arr[:, :, 1] + 0.114 * arr[:, :, 2]
        ys = (np.arange(size + 1) * self.height) // size
        xs = (np.arange(size + 1) * self.width) // size
        out = np.empty((size, size), dtype=np.float64)
        for r in range(size):
            y0, y1 = ys[r], max(ys[r + 1], ys[r] + 1)
            for c in range(size):
                x0, x1 = xs[c], max(xs[c + 1], xs[c] + 1)
                out[r, c] = gray[y0:y1, x0:x1].mean()
        return out.ravel()


def camera_basis(pose: CameraPose):
    """Orthonormal (right, up, forward) for a look-at camera. The up hint
    is re-orthogonalized; a hint parallel to the view direction falls back
    to a fixed alternate axis."""
    forward = pose.target - pose.position
    forward = forward / np.linalg.norm(forward)
    up_hint = pose.up
    right = np.cross(forward, up_hint)
    if np.linalg.norm(right) < 1e-9:
        up_hint = np.array([0.0, 1.0, 0.0]) if abs(forward[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
        right = np.cross(forward, up_hint)
    right = right / np.linalg.norm(right)
    true_up = np.cross(right, forward)
    return right, true_up, forward


def _splat_offsets(width: int) -> np.ndarray:
    radius = max(1, round(SPLAT_RADIUS_FRACTION * width))
    offs = [
        (dx, dy)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
        if dx * dx + dy * dy <= radius * radius
    ]
    return np.array(offs, dtype=np.int64)


def render_view(positions, colors, faces, pose: CameraPose, width: int = 512, height: int = 512) -> RasterImage:
    """Render one view of an object given as colored points with optional
    triangle faces. Deterministic: identical inputs give identical bytes."""
    if width <= 0 or height <= 0:
        raise ValueError(f"image size must be positive, got {width}x{height}")
    pts = np.asarray(positions, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
        raise ValueError("positions must be a nonempty (N, 3) array")
    cols = np.asarray(colors, dtype=np.uint8)
    if cols.shape != pts.shape:
        raise ValueError("colors must match positions in shape")

    right, true_up, forward = camera_basis(pose)
    rel = pts - pose.position
    cam = np.stack([rel @ right, rel @ true_up, rel @ forward], axis=1)

    focal = (height / 2.0) / math.tan(math.radians(VERTICAL_FOV_DEG) / 2.0)
    cx = (width - 1) / 2.0
    cy = (height - 1) / 2.0

    img = np.full((height, width, 3), BACKGROUND, dtype=np.uint8)
    zbuf = np.full(height * width, np.inf, dtype=np.float64)
    img_flat = img.reshape(-1, 3)

    visible = cam[:, 2] > NEAR_PLANE
    if visible.any():
        vcam = cam[visible]
        vcol = cols[visible]
        z = vcam[:, 2]
        px = np.rint(cx + focal * vcam[:, 0] / z).astype(np.int64)
        py = np.rint(cy - focal * vcam[:, 1] / z).astype(np.int64)

        offsets = _splat_offsets(width)
        n = px.shape[0]
        m = offsets.shape[0]
        all_x = (px[:, None] + offsets[None, :, 0]).ravel()
        all_y = (py[:, None] + offsets[None, :, 1]).ravel()
        all_z = np.repeat(z, m)
        # original point index breaks depth ties deterministically
        all_ord = np.repeat(np.arange(n, dtype=np.int64), m)
        inb = (all_x >= 0) & (all_x < width) & (all_y >= 0) & (all_y < height)
        if inb.any():
            flat = all_y[inb] * width + all_x[inb]
            zs = all_z[inb]
            order = all_ord[inb]
            perm = np.lexsort((order, zs, flat))
            flat_sorted = flat[perm]
            uniq, first = np.unique(flat_sorted, return_index=True)
            chosen = perm[first]
            img_flat[uniq] = vcol[order[chosen]]
            zbuf[uniq] = zs[chosen]

    if faces is not None:
        tri = np.asarray(faces, dtype=np.int64)
        if tri.size:
            _raster_triangles(tri, cam, cols, img_flat, zbuf, width, height, focal, cx, cy)

    return RasterImage.from_array(img)


def _raster_triangles(faces, cam, cols, img_flat, zbuf, width, height, focal, cx, cy):
    """Rasterize triangles into existing color/z buffers. Triangles with
    any corner at or behind the near plane are skipped (no clipping)."""
    for tri in faces:
        z = cam[tri, 2]
        if np.any(z <= NEAR_PLANE):
            continue
        sx = cx + focal * cam[tri, 0] / z
        sy = cy - focal * cam[tri, 1] / z
        x0 = max(int(math.floor(sx.min())), 0)
        x1 = min(int(math.ceil(sx.max())), width - 1)
        y0 = max(int(math.floor(sy.min())), 0)
        y1 = min(int(math.ceil(sy.max())), height - 1)
        if x1 < x0 or y1 < y0:
            continue
        area = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sy[1] - sy[0]) * (sx[2] - sx[0])
        if area == 0.0:
            continue
        gx, gy = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
        w0 = ((sx[1] - gx) * (sy[2] - gy) - (sy[1] - gy) * (sx[2] - gx)) / area
        w1 = ((sx[2] - gx) * (sy[0] - gy) - (sy[2] - gy) * (sx[0] - gx)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        iw0, iw1, iw2 = w0[inside], w1[inside], w2[inside]
        invz = iw0 / z[0] + iw1 / z[1] + iw2 / z[2]
        depth = 1.0 / invz
        flat = (gy[inside] * width + gx[inside]).astype(np.int64)
        nearer = depth < zbuf[flat]
        if not nearer.any():
            continue
        flat = flat[nearer]
        depth = depth[nearer]
        c = cols[tri].astype(np.float64)
        blended = (
            iw0[nearer, None] * c[0] / z[0]
            + iw1[nearer, None] * c[1] / z[1]
            + iw2[nearer, None] * c[2] / z[2]
        ) / invz[nearer, None]
        img_flat[flat] = np.clip(np.rint(blended), 0, 255).astype(np.uint8)
        zbuf[flat] = depth


def elevated_pose(centroid, radius: float, azimuth_rad: float, elevation_deg: float) -> CameraPose:
    """Camera at the given azimuth raised (or lowered) to an elevation
    angle, same distance from the centroid."""
    c = as_vec3(centroid, "centroid")
    el = math.radians(elevation_deg)
    offset = np.array([
        radius * math.cos(el) * math.cos(azimuth_rad),
        radius * math.cos(el) * math.sin(azimuth_rad),
        radius * math.sin(el),
    ])
    return CameraPose(position=c + offset, target=c)


def attribute_view_poses(instance: ObjectInstance, rig: list, front_index: int) -> list:
    """Views used for attribute extraction: the front view, a top and a
    bottom view at the front azimuth, plus every alternate rig view.
    Duplicates (front coinciding with an alternate) are removed."""
    if not 0 <= front_index < len(rig):
        raise ValueError(f"front_index {front_index} out of range for a {len(rig)}-view rig")
    front_pose = rig[front_index]
    offset = front_pose.position - front_pose.target
    radius = float(np.linalg.norm(offset))
    azimuth = math.atan2(offset[1], offset[0])
    poses = [
        front_pose,
        elevated_pose(front_pose.target, radius, azimuth, ELEVATION_DEG),
        elevated_pose(front_pose.target, radius, azimuth, -ELEVATION_DEG),
    ]
    poses.extend(rig[i] for i in range(0, len(rig), 2))
    out = []
    for pose in poses:
        if not any(np.array_equal(pose.position, kept.position) for kept in out):
            out.append(pose)
    return out
