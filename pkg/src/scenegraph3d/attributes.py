"""Multi-view attribute extraction for one object.

Renders the attribute view set (front, top, bottom, alternate ring views),
extracts a structured record per view, and merges the records into a
single AttributeSet. Extraction keeps going when some views fail, as long
as at least one succeeds; the result is then marked partial.
"""

from __future__ import annotations

import dataclasses
import logging

from .core import AttributeSet, ObjectInstance, SceneMesh, object_submesh
from .errors import ServiceError
from .render import attribute_view_poses, render_view

logger = logging.getLogger(__name__)


def extract_object_attributes(instance: ObjectInstance, mesh: SceneMesh, rig_poses: list,
                              front_index: int, clients, image_size=(512, 512)) -> AttributeSet:
    """Produce the consolidated attributes for one object.

    The caption is guaranteed nonempty: it falls back to the class label
    when every extracted caption is empty.
    """
    positions, colors, faces = object_submesh(mesh, instance)
    poses = attribute_view_poses(instance, rig_poses, front_index)
    width, height = image_size

    records = []
    failed = []
    for k, pose in enumerate(poses):
        view = render_view(positions, colors, faces, pose, width, height)
        try:
            records.append(clients.extract_view_attributes(view, instance.class_label))
        except ServiceError as exc:
            logger.warning("attribute view %d of object %d failed: %s", k, instance.id, exc)
            failed.append((k, exc))

    if not records:
        indices = ", ".join(str(k) for k, _ in failed)
        raise ServiceError(
            f"attribute extraction failed for all {len(poses)} views of object {instance.id} "
            f"(views {indices}): {failed[0][1]}",
            kind=failed[0][1].kind,
        )

    attrs = clients.aggregate_attributes(records)
    updates = {}
    if failed:
        extra = dict(attrs.extra)
        extra["partial"] = "true"
        extra["failed_views"] = ",".join(str(k) for k, _ in failed)
        updates["extra"] = extra
    if not attrs.caption:
        updates["caption"] = instance.class_label
    if updates:
        attrs = dataclasses.replace(attrs, **updates)
    return attrs
