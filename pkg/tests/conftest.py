"""Shared builders for the test suite: synthetic box scenes, rigid
transforms, and a controllable stand-in for the perception clients."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from scenegraph3d.clients import (
    ClientConfig,
    FrontViewJudgment,
    PerceptionClients,
    ViewAttributeRecord,
    _aggregate_majority,
    _hash_embed,
)
from scenegraph3d.core import ObjectInstance, SceneMesh

FIXTURES = Path(__file__).parent / "fixtures"


def box_grid(center, half_extents, resolution=(4, 4, 4)) -> np.ndarray:
    """A filled grid of points covering an axis-aligned box."""
    center = np.asarray(center, dtype=np.float64)
    half = np.asarray(half_extents, dtype=np.float64)
    axes = [
        np.linspace(center[d] - half[d], center[d] + half[d], resolution[d])
        for d in range(3)
    ]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return grid.reshape(-1, 3)


def scene_from_boxes(boxes, labels=None, colors=None, scene_center=None,
                     resolution=(4, 4, 4)):
    """Build (mesh, instances) from a list of (center, half_extents) boxes.

    Each box becomes one object whose vertices are a point grid.
    """
    all_points, all_colors, records = [], [], []
    base = 0
    for i, (center, half) in enumerate(boxes):
        res = resolution[i] if isinstance(resolution, list) else resolution
        pts = box_grid(center, half, res)
        color = (colors[i] if colors else (120, 120, 120))
        all_points.append(pts)
        all_colors.append(np.tile(np.asarray(color, dtype=np.uint8), (pts.shape[0], 1)))
        records.append((i, labels[i] if labels else f"box{i}",
                        list(range(base, base + pts.shape[0]))))
        base += pts.shape[0]
    mesh = SceneMesh(
        vertices=np.vstack(all_points),
        colors=np.vstack(all_colors),
        scene_center=scene_center,
    )
    instances = [
        ObjectInstance.from_mesh(mesh, obj_id, label, idx)
        for obj_id, label, idx in records
    ]
    return mesh, instances


def rotation_z(angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rigid_transform(points: np.ndarray, angle_rad: float, translation) -> np.ndarray:
    """Rotate about +Z then translate. Works on (N, 3) arrays and (3,) vectors."""
    rot = rotation_z(angle_rad)
    return np.asarray(points, dtype=np.float64) @ rot.T + np.asarray(translation, dtype=np.float64)


class StubClients:
    """Controllable stand-in for PerceptionClients.

    Every behavior is injectable; the defaults are deterministic and
    reasonable so most tests only override one hook.
    """

    def __init__(self, confidences=None, reference="unset", view_attrs=None,
                 aggregate=None, completion=None, embed=None):
        self._confidences = confidences
        self._reference = reference
        self._view_attrs = view_attrs
        self._aggregate = aggregate
        self._completion = completion
        self._embed = embed
        self.calls = []

    def cache_key(self):
        return ("stub",)

    def lookup_reference(self, class_label):
        self.calls.append(("lookup_reference", class_label))
        if self._reference == "unset":
            return None
        if isinstance(self._reference, dict):
            return self._reference.get(class_label)
        return self._reference

    def identify_front_view(self, reference, views, class_label):
        self.calls.append(("identify_front_view", class_label, len(views)))
        confs = self._confidences
        if callable(confs):
            confs = confs(reference, views, class_label)
        if confs is None:
            confs = [1.0 / len(views)] * len(views)
        if len(confs) != len(views):
            raise AssertionError("stub confidences do not match the view count")
        return FrontViewJudgment.from_confidences(confs)

    def extract_view_attributes(self, view, class_label):
        self.calls.append(("extract_view_attributes", class_label))
        if self._view_attrs is not None:
            return self._view_attrs(view, class_label)
        return ViewAttributeRecord(fields={
            "color": "gray",
            "geometry": "boxy",
            "functionality": f"serves as a {class_label}",
            "structural_details": "plain body",
            "caption": f"a gray {class_label}",
        })

    def aggregate_attributes(self, records):
        self.calls.append(("aggregate_attributes", len(records)))
        if self._aggregate is not None:
            return self._aggregate(records)
        return _aggregate_majority(records)

    def embed_text(self, text):
        self.calls.append(("embed_text", text))
        if self._embed is not None:
            return self._embed(text)
        return _hash_embed(text, 64)

    def complete_text(self, prompt, context=""):
        self.calls.append(("complete_text",))
        if self._completion is None:
            raise AssertionError("stub has no completion configured")
        return self._completion(prompt, context)


@pytest.fixture
def offline_clients():
    return PerceptionClients(ClientConfig(offline=True))


@pytest.fixture
def fixtures_dir():
    return FIXTURES
