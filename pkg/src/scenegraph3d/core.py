"""Domain types for segmented 3D scenes and the scene graphs built from them.

Conventions used throughout the package:
  - coordinates are in meters, +Z is up
  - angles are signed degrees in (-180, 180], positive counterclockwise
    when viewed from +Z
  - float arrays are float64, colors are uint8 RGB

All types are treated as immutable after construction and are safe to
share across worker threads.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

UNIT_NORM_TOL = 1e-9
DISTANCE_TOL = 1e-6
ANGLE_RANGE = (-180.0, 180.0)

ATTRIBUTE_FIELDS = ("color", "geometry", "functionality", "structural_details", "caption")


def as_vec3(value, name: str = "vector") -> np.ndarray:
    """Coerce to a float64 array of shape (3,)."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have shape (3,), got {arr.shape}")
    return arr


@dataclass(eq=False)
class Aabb:
    """Axis-aligned bounding box with inclusive min/max corners."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        self.min = as_vec3(self.min, "aabb min")
        self.max = as_vec3(self.max, "aabb max")

    @classmethod
    def from_points(cls, points) -> "Aabb":
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
            raise ValueError("Aabb.from_points needs a nonempty (N, 3) array")
        return cls(pts.min(axis=0), pts.max(axis=0))

    def diagonal(self) -> float:
        return float(np.linalg.norm(self.max - self.min))

    def xy_area(self) -> float:
        extent = self.max - self.min
        return float(extent[0] * extent[1])

    def contains(self, point, tol: float = 1e-9) -> bool:
        p = as_vec3(point, "point")
        return bool(np.all(p >= self.min - tol) and np.all(p <= self.max + tol))

    def to_dict(self) -> dict:
        return {"min": [float(v) for v in self.min], "max": [float(v) for v in self.max]}

    def __eq__(self, other):
        if not isinstance(other, Aabb):
            return NotImplemented
        return np.array_equal(self.min, other.min) and np.array_equal(self.max, other.max)


@dataclass(eq=False)
class SceneMesh:
    """One segmented 3D scene: colored vertices, optional triangle faces,
    and the scene center used as the global reference point.

    scene_center defaults to the mean of all vertex positions; pass an
    explicit value to override (e.g. from the segmentation file).
    """

    vertices: np.ndarray            # (V, 3) float64 positions
    colors: np.ndarray              # (V, 3) uint8 RGB
    faces: np.ndarray = None        # (F, 3) int64 vertex triples; may be empty
    scene_center: np.ndarray = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3 or self.vertices.shape[0] == 0:
            raise ValueError("vertices must be a nonempty (V, 3) array")
        self.colors = np.asarray(self.colors, dtype=np.uint8)
        if self.colors.shape != self.vertices.shape:
            raise ValueError("colors must match vertices in shape")
        if self.faces is None:
            self.faces = np.zeros((0, 3), dtype=np.int64)
        else:
            self.faces = np.asarray(self.faces, dtype=np.int64)
            if self.faces.size == 0:
                self.faces = self.faces.reshape(0, 3)
            if self.faces.ndim != 2 or self.faces.shape[1] != 3:
                raise ValueError("faces must be an (F, 3) array of vertex triples")
        if self.scene_center is None:
            self.scene_center = self.vertices.mean(axis=0)
        else:
            self.scene_center = as_vec3(self.scene_center, "scene_center")

    @property
    def vertex_count(self) -> int:
        return self.vertices.shape[0]


@dataclass(eq=False)
class ObjectInstance:
    """One segmented object: vertex membership plus derived geometry and,
    once estimated, its front direction."""

    id: int
    class_label: str
    vertex_indices: np.ndarray      # (K,) int64 indices into the scene mesh
    centroid: np.ndarray
    aabb: Aabb
    front: np.ndarray = None        # unit horizontal 3-vector, None until estimated
    front_confidence: float = None

    def __post_init__(self):
        self.vertex_indices = np.asarray(self.vertex_indices, dtype=np.int64).reshape(-1)
        self.centroid = as_vec3(self.centroid, "centroid")
        if self.front is not None:
            self.front = as_vec3(self.front, "front")
        if self.front_confidence is not None:
            self.front_confidence = float(self.front_confidence)

    @classmethod
    def from_mesh(cls, mesh: SceneMesh, id: int, class_label: str, vertex_indices) -> "ObjectInstance":
        """Build an instance with centroid and AABB derived from the mesh.

        Out-of-range indices are tolerated here so that validate_scene can
        report them; geometry is derived from the valid subset (or zeros
        when none are valid).
        """
        idx = np.asarray(vertex_indices, dtype=np.int64).reshape(-1)
        valid = idx[(idx >= 0) & (idx < mesh.vertex_count)]
        if valid.size:
            pts = mesh.vertices[valid]
            centroid = pts.mean(axis=0)
            aabb = Aabb.from_points(pts)
        else:
            centroid = np.zeros(3)
            aabb = Aabb(np.zeros(3), np.zeros(3))
        return cls(id=id, class_label=class_label, vertex_indices=idx, centroid=centroid, aabb=aabb)

    def with_front(self, front, confidence: float) -> "ObjectInstance":
        return ObjectInstance(
            id=self.id,
            class_label=self.class_label,
            vertex_indices=self.vertex_indices,
            centroid=self.centroid,
            aabb=self.aabb,
            front=as_vec3(front, "front"),
            front_confidence=float(confidence),
        )


def object_submesh(mesh: SceneMesh, instance: ObjectInstance):
    """Extract an object's vertices, colors, and remapped faces.

    Only faces whose three corners all belong to the instance survive.
    Returns (positions, colors, faces).
    """
    idx = instance.vertex_indices
    if idx.size == 0 or idx.min() < 0 or idx.max() >= mesh.vertex_count:
        raise ValueError(f"object {instance.id} has invalid vertex indices")
    positions = mesh.vertices[idx]
    colors = mesh.colors[idx]
    remap = np.full(mesh.vertex_count, -1, dtype=np.int64)
    remap[idx] = np.arange(idx.size, dtype=np.int64)
    if mesh.faces.size:
        mapped = remap[mesh.faces]
        keep = np.all(mapped >= 0, axis=1)
        faces = mapped[keep]
    else:
        faces = np.zeros((0, 3), dtype=np.int64)
    return positions, colors, faces


@dataclass
class AttributeSet:
    """Consolidated per-object descriptive attributes."""

    color: str = ""
    geometry: str = ""
    functionality: str = ""
    structural_details: str = ""
    caption: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "color": self.color,
            "geometry": self.geometry,
            "functionality": self.functionality,
            "structural_details": self.structural_details,
            "caption": self.caption,
            "extra": {k: self.extra[k] for k in sorted(self.extra)},
        }


@dataclass(eq=False)
class Node:
    """Graph node: one object with its attributes and geometry."""

    id: int
    class_label: str
    attributes: AttributeSet
    centroid: np.ndarray
    aabb: Aabb
    front: np.ndarray = None
    front_confidence: float = None

    def __post_init__(self):
        self.centroid = as_vec3(self.centroid, "centroid")
        if self.front is not None:
            self.front = as_vec3(self.front, "front")
        if self.front_confidence is not None:
            self.front_confidence = float(self.front_confidence)

    def __eq__(self, other):
        if not isinstance(other, Node):
            return NotImplemented
        front_equal = (self.front is None and other.front is None) or (
            self.front is not None and other.front is not None and np.array_equal(self.front, other.front)
        )
        return (
            self.id == other.id
            and self.class_label == other.class_label
            and self.attributes == other.attributes
            and np.array_equal(self.centroid, other.centroid)
            and self.aabb == other.aabb
            and front_equal
            and self.front_confidence == other.front_confidence
        )


@dataclass
class Edge:
    """Directed edge: the subject's position described relative to the
    object's front direction."""

    subject_id: int
    object_id: int
    relation: str
    distance_m: float
    angle_deg: float


@dataclass
class PairGeometry:
    """Raw geometric quantities for one ordered (subject, object) pair.

    planar_degenerate is set when the subject sits directly above or below
    the object, where the planar angle is defined as 0.
    """

    distance_m: float
    signed_planar_angle_deg: float
    elevation_delta_m: float
    horizontal_overlap_ratio: float
    planar_degenerate: bool = False


@dataclass(eq=False)
class SceneGraph:
    """Nodes plus dense directed edges plus build metadata."""

    nodes: list
    edges: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self._by_id = {n.id: n for n in self.nodes}

    def node_by_id(self, node_id: int) -> Node:
        return self._by_id[node_id]

    def has_node(self, node_id: int) -> bool:
        return node_id in self._by_id

    def __eq__(self, other):
        if not isinstance(other, SceneGraph):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges and self.metadata == other.metadata


def _check_front(front, confidence, owner: str, out: list):
    if front is not None:
        norm = float(np.linalg.norm(front))
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            out.append(f"{owner}: front is not unit length (norm {norm})")
        if front[2] != 0.0:
            out.append(f"{owner}: front is not horizontal (z {front[2]})")
    if confidence is not None and not (0.0 <= confidence <= 1.0):
        out.append(f"{owner}: front_confidence {confidence} outside [0, 1]")


def validate_scene(mesh: SceneMesh, instances: list) -> list:
    """Check all scene invariants. Returns a list of violation strings;
    an empty list means the scene is valid. Never mutates its input."""
    out = []
    if not np.all(np.isfinite(mesh.vertices)):
        out.append("mesh has non-finite vertex positions")
    if not np.all(np.isfinite(mesh.scene_center)):
        out.append("scene_center is not finite")
    if mesh.faces.size:
        bad = (mesh.faces < 0) | (mesh.faces >= mesh.vertex_count)
        if bad.any():
            rows = np.unique(np.nonzero(bad)[0])[:5]
            out.append(f"faces reference out-of-range vertices (first bad faces: {rows.tolist()})")
    if not instances:
        out.append("no instances")
    seen_ids = {}
    for inst in instances:
        tag = f"instance {inst.id}"
        if inst.id < 0:
            out.append(f"{tag}: id must be >= 0")
        if inst.id in seen_ids:
            out.append(f"{tag}: duplicate id")
        seen_ids[inst.id] = True
        if not inst.class_label:
            out.append(f"{tag}: empty class_label")
        if inst.vertex_indices.size == 0:
            out.append(f"{tag}: empty vertex_indices")
        else:
            lo = int(inst.vertex_indices.min())
            hi = int(inst.vertex_indices.max())
            if lo < 0 or hi >= mesh.vertex_count:
                out.append(f"{tag}: vertex index out of range (min {lo}, max {hi}, vertices {mesh.vertex_count})")
        if np.any(inst.aabb.min > inst.aabb.max):
            out.append(f"{tag}: aabb min exceeds max")
        elif not inst.aabb.contains(inst.centroid):
            out.append(f"{tag}: centroid outside aabb")
        _check_front(inst.front, inst.front_confidence, tag, out)
    return out


def validate_graph(graph: SceneGraph) -> list:
    """Check scene-graph invariants. Returns violation strings."""
    out = []
    seen = {}
    for node in graph.nodes:
        tag = f"node {node.id}"
        if node.id in seen:
            out.append(f"{tag}: duplicate id")
        seen[node.id] = node
        if not node.class_label:
            out.append(f"{tag}: empty class_label")
        if not node.attributes.caption:
            out.append(f"{tag}: empty caption")
        if np.any(node.aabb.min > node.aabb.max):
            out.append(f"{tag}: aabb min exceeds max")
        _check_front(node.front, node.front_confidence, tag, out)
    for k, edge in enumerate(graph.edges):
        tag = f"edge {k} ({edge.subject_id} -> {edge.object_id})"
        if edge.subject_id == edge.object_id:
            out.append(f"{tag}: self loop")
        missing = [i for i in (edge.subject_id, edge.object_id) if i not in seen]
        if missing:
            out.append(f"{tag}: unknown node ids {missing}")
            continue
        if not edge.relation:
            out.append(f"{tag}: empty relation")
        if edge.distance_m < 0:
            out.append(f"{tag}: negative distance")
        if not (ANGLE_RANGE[0] < edge.angle_deg <= ANGLE_RANGE[1]):
            out.append(f"{tag}: angle {edge.angle_deg} outside ({ANGLE_RANGE[0]}, {ANGLE_RANGE[1]}]")
        subj = seen[edge.subject_id]
        obj = seen[edge.object_id]
        actual = float(np.linalg.norm(subj.centroid - obj.centroid))
        if abs(actual - edge.distance_m) > DISTANCE_TOL:
            out.append(f"{tag}: distance_m {edge.distance_m} differs from centroid distance {actual}")
    return out
