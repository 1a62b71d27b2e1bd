"""Dense directed spatial relations.

Every ordered object pair gets one edge whose label is built from
geometric rules evaluated in the object's own reference frame (its front
direction), so labels do not change when the whole scene is rotated or
translated. The label joins up to three parts in a fixed order: one
horizontal sector, an optional vertical/contact word, and an optional
proximity word.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass

from .core import Aabb, Edge, PairGeometry, SceneMesh
from .errors import MissingFrontError, ResponseParseError
from .geometry import pair_geometry

logger = logging.getLogger(__name__)

# counterclockwise from the front, one label per 45 degree sector
SECTOR_LABELS = (
    "in front of",
    "in front of and to the left",
    "left of",
    "behind and to the left",
    "behind",
    "behind and to the right",
    "right of",
    "in front of and to the right",
)


@dataclass
class RelationRuleConfig:
    """Thresholds for the geometric relation rules.

    near/far are scale-relative: near compares against the two objects'
    own sizes, far against the whole scene's diagonal.
    """

    sector_width_deg: float = 45.0
    contact_epsilon_m: float = 0.05
    overlap_min: float = 0.3
    near_scale: float = 1.5
    far_fraction: float = 0.5

    def __post_init__(self):
        if self.sector_width_deg <= 0 or (360.0 / self.sector_width_deg) % 1.0 != 0.0:
            raise ValueError("sector_width_deg must divide 360")
        if round(360.0 / self.sector_width_deg) != len(SECTOR_LABELS):
            raise ValueError(f"only {len(SECTOR_LABELS)} sectors are supported "
                             f"(sector_width_deg {360.0 / len(SECTOR_LABELS)})")
        if self.contact_epsilon_m <= 0:
            raise ValueError("contact_epsilon_m must be positive")
        if not 0.0 < self.overlap_min <= 1.0:
            raise ValueError("overlap_min must be in (0, 1]")
        if self.near_scale <= 0:
            raise ValueError("near_scale must be positive")
        if not 0.0 < self.far_fraction <= 1.0:
            raise ValueError("far_fraction must be in (0, 1]")


def sector_label(angle_deg: float, sector_width_deg: float = 45.0) -> str:
    """Horizontal sector for a signed planar angle. Sector centers sit at
    multiples of the width (0 = dead ahead, +90 = left); boundary angles
    belong to the counterclockwise sector."""
    n = len(SECTOR_LABELS)
    idx = int(math.floor((angle_deg + sector_width_deg / 2.0) / sector_width_deg)) % n
    return SECTOR_LABELS[idx]


def classify_pair(pg: PairGeometry, subject_aabb: Aabb, object_aabb: Aabb,
                  config: RelationRuleConfig, scene_diagonal_m: float) -> list:
    """Base relation labels for one ordered pair, in fixed order: sector,
    vertical, proximity."""
    labels = [sector_label(pg.signed_planar_angle_deg, config.sector_width_deg)]

    s_min, s_max = float(subject_aabb.min[2]), float(subject_aabb.max[2])
    o_min, o_max = float(object_aabb.min[2]), float(object_aabb.max[2])
    overlapping = pg.horizontal_overlap_ratio >= config.overlap_min
    if overlapping:
        if abs(s_min - o_max) <= config.contact_epsilon_m:
            labels.append("on")
        elif abs(s_max - o_min) <= config.contact_epsilon_m:
            labels.append("under")
        elif s_min > o_max:
            labels.append("above")
        elif s_max < o_min:
            labels.append("below")

    near_bound = config.near_scale * (subject_aabb.diagonal() + object_aabb.diagonal()) / 2.0
    if pg.distance_m <= near_bound:
        labels.append("near")
    elif scene_diagonal_m > 0 and pg.distance_m >= config.far_fraction * scene_diagonal_m:
        labels.append("far")

    return labels


def build_edges(instances: list, mesh: SceneMesh, config: RelationRuleConfig,
                clients=None, enrich: bool = False) -> list:
    """One directed edge per ordered pair of instances: n(n-1) edges.

    Every instance must already carry a front direction. With enrich set,
    the text model rewrites the relation labels; endpoints, distances, and
    angles are never touched by enrichment.
    """
    for inst in instances:
        if inst.front is None:
            raise MissingFrontError(inst.id)
    scene_diagonal = Aabb.from_points(mesh.vertices).diagonal()

    edges = []
    for subject in instances:
        for obj in instances:
            if subject.id == obj.id:
                continue
            pg = pair_geometry(subject.centroid, subject.aabb, obj.centroid, obj.aabb, obj.front)
            labels = classify_pair(pg, subject.aabb, obj.aabb, config, scene_diagonal)
            edges.append(Edge(
                subject_id=subject.id,
                object_id=obj.id,
                relation=", ".join(labels),
                distance_m=pg.distance_m,
                angle_deg=pg.signed_planar_angle_deg,
            ))

    if enrich:
        if clients is None:
            raise ValueError("enrichment requires clients")
        edges = enrich_edges(edges, instances, clients)
    return edges


def enrich_edges(edges: list, instances: list, clients) -> list:
    """Replace relation labels with model-rewritten phrases. Distances,
    angles, and endpoints are preserved."""
    if not edges:
        return []
    from .clients import load_prompt  # local import to avoid a cycle at module load

    context = json.dumps({
        "nodes": [{"id": inst.id, "label": inst.class_label} for inst in instances],
        "edges": [{
            "subject": e.subject_id,
            "object": e.object_id,
            "relation": e.relation,
            "distance_m": e.distance_m,
            "angle_deg": e.angle_deg,
        } for e in edges],
    }, ensure_ascii=False)
    response = clients.complete_text(load_prompt("enrich"), context)
    try:
        labels = json.loads(response)
    except json.JSONDecodeError:
        raise ResponseParseError("enrichment output is not JSON", raw=response[:500])
    if not isinstance(labels, list) or len(labels) != len(edges):
        raise ResponseParseError(f"enrichment must return {len(edges)} strings", raw=response[:500])
    out = []
    for edge, label in zip(edges, labels):
        if not isinstance(label, str) or not label:
            raise ResponseParseError("enrichment produced an empty relation", raw=response[:500])
        out.append(dataclasses.replace(edge, relation=label))
    return out
