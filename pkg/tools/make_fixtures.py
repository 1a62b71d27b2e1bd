"""Regenerate the committed test fixtures.

Produces a small deterministic scene (a table with a book on it, two
chairs, and a lamp), its segmentation, reference images for three of the
four classes, a labeled query set, and optionally the golden offline
graph. Everything is a pure function of the constants below, so the
fixtures are reproducible byte for byte.

Usage: python tools/make_fixtures.py [--out-dir DIR] [--golden]
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from scenegraph3d.core import SceneMesh, ObjectInstance, object_submesh
from scenegraph3d.front import object_rig
from scenegraph3d.pipeline import make_pipeline_config, make_clients, run_pipeline
from scenegraph3d.render import render_view
from scenegraph3d.sceneio import save_graph

# (label, color, box center, box size, grid resolution)
OBJECTS = [
    ("table", (210, 120, 40), (0.0, 0.0, 0.55), (1.2, 0.8, 0.1), (24, 18, 4)),
    ("chair", (200, 30, 30), (0.0, -1.2, 0.45), (0.45, 0.45, 0.9), (12, 12, 16)),
    ("chair", (30, 60, 200), (0.0, 1.2, 0.45), (0.45, 0.45, 0.9), (12, 12, 16)),
    ("lamp", (40, 170, 60), (1.8, 0.0, 0.9), (0.25, 0.25, 1.8), (8, 8, 30)),
    ("book", (160, 40, 160), (0.3, 0.1, 0.625), (0.3, 0.2, 0.05), (10, 8, 3)),
]
SCENE_CENTER = (0.0, 0.0, 0.5)
# classes with a reference image; "lamp" is deliberately missing so the
# no-reference path shows up in the golden build
REFERENCE_CLASSES = ("table", "chair", "book")

QUERIES = [
    {"query": "the red chair", "target_id": 1, "category": "color"},
    {"query": "the blue chair", "target_id": 2, "category": "color"},
    {"query": "the orange table", "target_id": 0, "category": "class"},
    {"query": "the green lamp", "target_id": 3, "category": "class"},
    # intentionally mislabeled: the query describes the book (object 4)
    {"query": "a magenta book", "target_id": 1, "category": "adversarial"},
]


def box_grid(center, size, resolution) -> np.ndarray:
    """A filled axis-aligned grid of points covering the box."""
    cx, cy, cz = center
    sx, sy, sz = size
    nx, ny, nz = resolution
    xs = np.linspace(cx - sx / 2, cx + sx / 2, nx)
    ys = np.linspace(cy - sy / 2, cy + sy / 2, ny)
    zs = np.linspace(cz - sz / 2, cz + sz / 2, nz)
    grid = np.stack(np.meshgrid(xs, ys, zs, indexing="ij"), axis=-1)
    return grid.reshape(-1, 3)


def build_scene():
    """Returns (positions, colors, faces, instance records)."""
    positions, colors, records = [], [], []
    base = 0
    table_faces = None
    for obj_id, (label, color, center, size, resolution) in enumerate(OBJECTS):
        pts = box_grid(center, size, resolution)
        positions.append(pts)
        colors.append(np.tile(np.array(color, dtype=np.uint8), (pts.shape[0], 1)))
        records.append({
            "id": obj_id,
            "label": label,
            "vertex_indices": list(range(base, base + pts.shape[0])),
        })
        if label == "table":
            # two triangles across the table top, to exercise face handling
            nx, ny, nz = resolution
            corner = lambda ix, iy: base + (ix * ny + iy) * nz + (nz - 1)
            a, b = corner(0, 0), corner(nx - 1, 0)
            c, d = corner(nx - 1, ny - 1), corner(0, ny - 1)
            table_faces = [[a, b, c], [a, c, d]]
        base += pts.shape[0]
    return np.vstack(positions), np.vstack(colors), table_faces, records


def write_ply(path: Path, positions, colors, faces) -> None:
    lines = [
        "ply",
        "format ascii 1.0",
        "comment synthetic fixture scene",
        f"element vertex {positions.shape[0]}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        f"element face {len(faces)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    # float32 round trip: write the shortest decimal that reproduces the value
    pos32 = positions.astype(np.float32)
    for p, c in zip(pos32, colors):
        coords = " ".join(repr(float(v)) for v in p)
        lines.append(f"{coords} {c[0]} {c[1]} {c[2]}")
    for face in faces:
        lines.append("3 " + " ".join(str(i) for i in face))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_references(out_dir: Path, mesh, instances) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {}
    config = make_pipeline_config({}, env={}, offline=True)
    for label in REFERENCE_CLASSES:
        exemplar = next(inst for inst in instances if inst.class_label == label)
        pts, cols, faces = object_submesh(mesh, exemplar)
        pose = object_rig(exemplar, config.rig)[0]
        image = render_view(pts, cols, faces, pose, 512, 512)
        filename = f"{label}.png"
        image.save_png(out_dir / filename)
        manifest[label] = filename
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", default="tests/fixtures")
    parser.add_argument("--golden", action="store_true",
                        help="also rebuild the committed golden offline graph")
    args = parser.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    positions, colors, faces, records = build_scene()
    write_ply(out / "scene.ply", positions, colors, faces)
    segments = {"scene_center": list(SCENE_CENTER), "instances": records}
    (out / "segments.json").write_text(
        json.dumps(segments, indent=2) + "\n", encoding="utf-8")
    (out / "queries.jsonl").write_text(
        "".join(json.dumps(q) + "\n" for q in QUERIES), encoding="utf-8")

    mesh = SceneMesh(vertices=positions, colors=colors,
                     faces=np.array(faces, dtype=np.int64),
                     scene_center=np.array(SCENE_CENTER))
    instances = [
        ObjectInstance.from_mesh(mesh, r["id"], r["label"], r["vertex_indices"])
        for r in records
    ]
    write_references(out / "references", mesh, instances)
    print(f"wrote scene ({positions.shape[0]} vertices, {len(records)} objects) to {out}")

    if args.golden:
        config = make_pipeline_config(
            {}, env={}, offline=True, references_dir=str(out / "references"))
        graph = run_pipeline(config, out / "scene.ply", out / "segments.json",
                             clients=make_clients(config))
        save_graph(graph, out / "golden_graph.json")
        print(f"wrote golden graph ({len(graph.nodes)} nodes, {len(graph.edges)} edges)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
