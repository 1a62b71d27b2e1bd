"""Per-object front-direction estimation.

For each object: place a horizontal camera ring around it, render one view
per camera, ask the vision client which view shows the object's front
against the class reference image, then turn the winning camera position
into a unit front vector. Ambiguity (several views above the confidence
threshold, common for symmetric objects) is resolved by preferring the
candidate direction that points toward the scene center.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ObjectInstance, SceneMesh, object_submesh
from .errors import DegenerateGeometryError
from .geometry import RigConfig, disambiguate_front, front_direction, relative_vector, rig_positions
from .render import render_view

logger = logging.getLogger(__name__)


@dataclass
class FrontEstimateConfig:
    rig: RigConfig = field(default_factory=RigConfig)
    front_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.front_threshold <= 1.0:
            raise ValueError("front_threshold must be in [0, 1]")


@dataclass
class FrontEstimate:
    """Result of front estimation for one object.

    low_confidence: no view cleared the threshold (argmax fallback), or the
    ambiguity could not be resolved toward the scene center.
    no_reference: the class had no reference image, so the judgment ran
    without one.
    ambiguous: more than one view cleared the threshold.
    """

    front: np.ndarray
    confidence: float
    chosen_view: int
    low_confidence: bool = False
    no_reference: bool = False
    ambiguous: bool = False


def object_rig(instance: ObjectInstance, rig: RigConfig) -> list:
    """The camera ring used for this object, radius derived from its AABB."""
    return rig_positions(instance.centroid, rig.radius_for(instance.aabb), rig.num_views)


def estimate_front(instance: ObjectInstance, mesh: SceneMesh, config: FrontEstimateConfig,
                   clients, image_size=(512, 512), dump_dir=None) -> FrontEstimate:
    """Estimate one object's front direction.

    The returned front always equals front_direction(chosen rig pose,
    centroid): a horizontal unit vector.
    """
    if instance.aabb.diagonal() == 0.0:
        raise DegenerateGeometryError(f"object {instance.id} has no spatial extent")
    positions, colors, faces = object_submesh(mesh, instance)
    poses = object_rig(instance, config.rig)
    width, height = image_size
    views = [render_view(positions, colors, faces, pose, width, height) for pose in poses]

    reference = clients.lookup_reference(instance.class_label)
    judgment = clients.identify_front_view(reference, views, instance.class_label)

    above = [i for i, c in enumerate(judgment.per_view_confidence) if c > config.front_threshold]
    low_confidence = False
    ambiguous = False
    if len(above) == 1:
        chosen = above[0]
    elif len(above) > 1:
        ambiguous = True
        if np.array_equal(mesh.scene_center, instance.centroid):
            # no direction toward the scene center exists; keep the best view
            chosen = judgment.best_index
            low_confidence = True
        else:
            candidates = [relative_vector(poses[i].position, instance.centroid) for i in above]
            chosen = above[disambiguate_front(candidates, instance.centroid, mesh.scene_center)]
    else:
        chosen = judgment.best_index
        low_confidence = True

    if dump_dir is not None:
        _dump_views(dump_dir, instance, views, chosen)

    front = front_direction(poses[chosen].position, instance.centroid)
    return FrontEstimate(
        front=front,
        confidence=judgment.per_view_confidence[chosen],
        chosen_view=chosen,
        low_confidence=low_confidence,
        no_reference=reference is None,
        ambiguous=ambiguous,
    )


def _dump_views(dump_dir, instance: ObjectInstance, views: list, chosen: int) -> None:
    out = Path(dump_dir) / f"object_{instance.id}"
    out.mkdir(parents=True, exist_ok=True)
    for k, view in enumerate(views):
        view.save_png(out / f"view_{k:02d}.png")
    (out / "chosen.txt").write_text(f"{chosen}\n", encoding="utf-8")
    logger.debug("dumped %d views for object %d to %s", len(views), instance.id, out)
