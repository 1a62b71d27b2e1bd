"""Pure vector math: camera rig construction, front-direction vectors,
symmetric-front disambiguation, and pairwise spatial geometry.

All functions are pure and reentrant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Aabb, PairGeometry, as_vec3
from .errors import DegenerateGeometryError

UP_Z = np.array([0.0, 0.0, 1.0])


@dataclass(eq=False)
class CameraPose:
    """Look-at camera: position, target point, and an up hint that the
    renderer re-orthogonalizes."""

    position: np.ndarray
    target: np.ndarray
    up: np.ndarray = field(default_factory=lambda: UP_Z.copy())

    def __post_init__(self):
        self.position = as_vec3(self.position, "position")
        self.target = as_vec3(self.target, "target")
        self.up = as_vec3(self.up, "up")
        if np.array_equal(self.position, self.target):
            raise DegenerateGeometryError("camera position coincides with its target")
        norm = float(np.linalg.norm(self.up))
        if norm == 0.0:
            raise ValueError("camera up vector must be nonzero")
        self.up = self.up / norm


@dataclass
class RigConfig:
    """Horizontal camera ring: view count and radius rule.

    The radius is max(radius_scale * aabb diagonal, min_radius_m) so the
    object stays in frame across object sizes.
    """

    num_views: int = 12
    radius_scale: float = 1.5
    min_radius_m: float = 0.5

    def __post_init__(self):
        if self.num_views < 3:
            raise ValueError(f"num_views must be >= 3, got {self.num_views}")
        if self.radius_scale <= 0:
            raise ValueError("radius_scale must be positive")
        if self.min_radius_m <= 0:
            raise ValueError("min_radius_m must be positive")

    def radius_for(self, aabb: Aabb) -> float:
        return max(self.radius_scale * aabb.diagonal(), self.min_radius_m)


def rig_positions(centroid, radius: float, num_views: int) -> list:
    """Place num_views cameras on a horizontal circle around the centroid.

    Camera k (k = 1..N) sits at centroid + radius*(cos t, sin t, 0) with
    t = 2*pi*k/N, looking at the centroid with +Z up. The returned list is
    indexed from 0, so poses[i] corresponds to k = i + 1.
    """
    c = as_vec3(centroid, "centroid")
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if num_views < 3:
        raise ValueError(f"num_views must be >= 3, got {num_views}")
    poses = []
    for k in range(1, num_views + 1):
        theta = 2.0 * math.pi * k / num_views
        offset = np.array([radius * math.cos(theta), radius * math.sin(theta), 0.0])
        poses.append(CameraPose(position=c + offset, target=c))
    return poses


def relative_vector(camera_position, centroid) -> np.ndarray:
    """Unnormalized vector from the object centroid to the camera."""
    cam = as_vec3(camera_position, "camera_position")
    c = as_vec3(centroid, "centroid")
    v = cam - c
    if float(np.linalg.norm(v)) == 0.0:
        raise DegenerateGeometryError("camera position coincides with centroid")
    return v


def front_direction(camera_position, centroid) -> np.ndarray:
    """Unit vector from the object centroid toward the camera."""
    v = relative_vector(camera_position, centroid)
    return v / float(np.linalg.norm(v))


def disambiguate_front(candidates: list, centroid, scene_center) -> int:
    """Pick the candidate direction forming the smallest angle with the
    vector from the centroid toward the scene center. Ties go to the
    lowest index."""
    if not candidates:
        raise DegenerateGeometryError("no candidate directions")
    c = as_vec3(centroid, "centroid")
    s = as_vec3(scene_center, "scene_center")
    toward = s - c
    toward_norm = float(np.linalg.norm(toward))
    if toward_norm == 0.0:
        raise DegenerateGeometryError("scene center coincides with centroid")
    best_idx = 0
    best_cos = -math.inf
    for i, cand in enumerate(candidates):
        v = as_vec3(cand, f"candidate {i}")
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise DegenerateGeometryError(f"candidate {i} is the zero vector")
        # argmin of arccos equals argmax of the cosine
        cos = float(np.dot(v, toward)) / (norm * toward_norm)
        if cos > best_cos:
            best_cos = cos
            best_idx = i
    return best_idx


def signed_planar_angle_deg(front, v) -> tuple:
    """Signed angle in degrees from the horizontal part of `front` to the
    XY-projection of `v`, positive counterclockwise viewed from +Z, in
    (-180, 180]. Returns (angle, degenerate); degenerate is True when v
    has no horizontal component, in which case the angle is 0."""
    f = as_vec3(front, "front")
    w = as_vec3(v, "v")
    fx, fy = float(f[0]), float(f[1])
    if fx == 0.0 and fy == 0.0:
        raise DegenerateGeometryError("front direction has no horizontal component")
    px, py = float(w[0]), float(w[1])
    if px == 0.0 and py == 0.0:
        return 0.0, True
    angle = math.degrees(math.atan2(fx * py - fy * px, fx * px + fy * py))
    if angle <= -180.0:
        angle += 360.0
    return angle, False


def horizontal_overlap_ratio(a: Aabb, b: Aabb) -> float:
    """Area of the XY intersection of two AABBs over the smaller XY
    footprint; 0 when either footprint has zero area."""
    width = min(a.max[0], b.max[0]) - max(a.min[0], b.min[0])
    depth = min(a.max[1], b.max[1]) - max(a.min[1], b.min[1])
    if width <= 0.0 or depth <= 0.0:
        return 0.0
    smaller = min(a.xy_area(), b.xy_area())
    if smaller <= 0.0:
        return 0.0
    return min(float(width * depth) / smaller, 1.0)


def pair_geometry(subject_centroid, subject_aabb: Aabb, object_centroid, object_aabb: Aabb, object_front) -> PairGeometry:
    """Distance, signed planar angle relative to the object's front,
    elevation delta, and horizontal overlap for one ordered pair."""
    sc = as_vec3(subject_centroid, "subject_centroid")
    oc = as_vec3(object_centroid, "object_centroid")
    v = sc - oc
    distance = float(np.linalg.norm(v))
    if distance == 0.0:
        raise DegenerateGeometryError("subject and object centroids coincide")
    angle, degenerate = signed_planar_angle_deg(object_front, v)
    return PairGeometry(
        distance_m=distance,
        signed_planar_angle_deg=angle,
        elevation_delta_m=float(sc[2] - oc[2]),
        horizontal_overlap_ratio=horizontal_overlap_ratio(subject_aabb, object_aabb),
        planar_degenerate=degenerate,
    )
