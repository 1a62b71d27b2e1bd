"""File formats: PLY scene meshes, JSON segmentation, scene-graph JSON
documents, and JSONL query sets.

PLY support covers ascii 1.0 and binary_little_endian 1.0 with float or
double x/y/z, uchar red/green/blue, and triangle faces declared as a
"property list uchar int vertex_indices". Extra scalar vertex properties
are skipped. Graph documents round-trip exactly: every float is written
with enough digits to reproduce the same value on load.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .core import Aabb, AttributeSet, Edge, Node, ObjectInstance, SceneGraph, SceneMesh, ATTRIBUTE_FIELDS
from .errors import DataError, ParseError, SchemaError

logger = logging.getLogger(__name__)

_PLY_DTYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
_FLOAT_TYPES = {"float", "float32", "double", "float64"}
_BYTE_TYPES = {"uchar", "uint8"}
_INT_TYPES = {"char", "int8", "uchar", "uint8", "short", "int16", "ushort", "uint16",
              "int", "int32", "uint", "uint32"}


def load_ply(path):
    """Parse a PLY mesh. Returns (positions, colors, faces) with faces
    possibly empty."""
    path = str(path)
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read mesh file: {exc}", path=path)

    header_lines, body_offset = _read_header_lines(blob, path)
    fmt, elements = _parse_header(header_lines, path)

    vertex_elem = next((e for e in elements if e["name"] == "vertex"), None)
    if vertex_elem is None:
        raise ParseError("PLY file has no vertex element", path=path)
    _check_vertex_properties(vertex_elem, path)
    face_elem = next((e for e in elements if e["name"] == "face"), None)
    if face_elem is not None:
        _check_face_properties(face_elem, path)

    if fmt == "ascii":
        return _parse_ascii_body(blob, body_offset, elements, path)
    return _parse_binary_body(blob, body_offset, elements, path)


def _read_header_lines(blob: bytes, path: str):
    end = blob.find(b"end_header")
    if end < 0:
        raise ParseError("PLY header has no end_header line", path=path)
    newline = blob.find(b"\n", end)
    if newline < 0:
        raise ParseError("PLY header is truncated", path=path)
    try:
        text = blob[:newline].decode("ascii")
    except UnicodeDecodeError:
        raise ParseError("PLY header is not ascii", path=path)
    return text.splitlines(), newline + 1


def _parse_header(lines, path: str):
    if not lines or lines[0].strip() != "ply":
        raise ParseError("not a PLY file (missing 'ply' magic)", path=path, line=1)
    fmt = None
    elements = []
    for lineno, raw in enumerate(lines[1:], start=2):
        tokens = raw.strip().split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            if len(tokens) != 3 or tokens[1] not in ("ascii", "binary_little_endian"):
                raise ParseError(f"unsupported PLY format line: {raw.strip()!r}", path=path, line=lineno)
            fmt = tokens[1]
        elif tokens[0] == "element":
            if len(tokens) != 3:
                raise ParseError("malformed element line", path=path, line=lineno)
            try:
                count = int(tokens[2])
            except ValueError:
                raise ParseError(f"bad element count {tokens[2]!r}", path=path, line=lineno)
            elements.append({"name": tokens[1], "count": count, "properties": []})
        elif tokens[0] == "property":
            if not elements:
                raise ParseError("property declared before any element", path=path, line=lineno)
            if tokens[1] == "list":
                if len(tokens) != 5:
                    raise ParseError("malformed list property", path=path, line=lineno)
                count_t, item_t, name = tokens[2], tokens[3], tokens[4]
                if count_t not in _PLY_DTYPES or item_t not in _PLY_DTYPES:
                    raise ParseError(f"unsupported list property types {count_t}/{item_t}", path=path, line=lineno)
                elements[-1]["properties"].append(("list", count_t, item_t, name))
            else:
                if len(tokens) != 3:
                    raise ParseError("malformed property line", path=path, line=lineno)
                if tokens[1] not in _PLY_DTYPES:
                    raise ParseError(f"unsupported property type {tokens[1]!r}", path=path, line=lineno)
                elements[-1]["properties"].append(("scalar", tokens[1], tokens[2]))
        elif tokens[0] == "end_header":
            break
        else:
            raise ParseError(f"unrecognized header line: {raw.strip()!r}", path=path, line=lineno)
    if fmt is None:
        raise ParseError("PLY header has no format line", path=path)
    return fmt, elements


def _check_vertex_properties(elem, path: str):
    scalars = {p[2]: p[1] for p in elem["properties"] if p[0] == "scalar"}
    if any(p[0] == "list" for p in elem["properties"]):
        raise ParseError("list properties on the vertex element are not supported", path=path)
    for name in ("x", "y", "z"):
        if name not in scalars:
            raise ParseError(f"vertex element is missing property {name!r}", path=path)
        if scalars[name] not in _FLOAT_TYPES:
            raise ParseError(f"vertex property {name!r} must be float or double", path=path)
    for name in ("red", "green", "blue"):
        if name not in scalars:
            raise ParseError(f"vertex element is missing color property {name!r}", path=path)
        if scalars[name] not in _BYTE_TYPES:
            raise ParseError(f"vertex property {name!r} must be uchar", path=path)


def _check_face_properties(elem, path: str):
    props = elem["properties"]
    if len(props) != 1 or props[0][0] != "list" or props[0][3] not in ("vertex_indices", "vertex_index"):
        raise ParseError("face element must have exactly one list property named vertex_indices", path=path)
    if props[0][1] not in _BYTE_TYPES or props[0][2] not in _INT_TYPES:
        raise ParseError("face list must be declared as 'property list uchar int vertex_indices'", path=path)


def _parse_ascii_body(blob: bytes, offset: int, elements, path: str):
    try:
        text = blob[offset:].decode("ascii")
    except UnicodeDecodeError:
        raise ParseError("ascii PLY body contains non-ascii bytes", path=path)
    lines = [ln for ln in text.splitlines()]
    header_line_count = blob[:offset].count(b"\n")
    positions = colors = None
    faces = []
    cursor = 0

    def data_line(i):
        return header_line_count + i + 1

    line_index = 0
    # skip blank lines uniformly so trailing newlines are harmless
    data_lines = [(i, ln.split()) for i, ln in enumerate(lines) if ln.strip()]
    for elem in elements:
        rows = data_lines[cursor:cursor + elem["count"]]
        if len(rows) < elem["count"]:
            raise ParseError(f"file ends inside element {elem['name']!r} "
                             f"({len(rows)} of {elem['count']} rows)", path=path)
        cursor += elem["count"]
        if elem["name"] == "vertex":
            names = [p[2] for p in elem["properties"]]
            want = len(names)
            pos = np.empty((elem["count"], 3), dtype=np.float64)
            col = np.empty((elem["count"], 3), dtype=np.uint8)
            xi, yi, zi = names.index("x"), names.index("y"), names.index("z")
            ri, gi, bi = names.index("red"), names.index("green"), names.index("blue")
            for row, (i, tokens) in enumerate(rows):
                if len(tokens) != want:
                    raise ParseError(f"vertex row has {len(tokens)} values, expected {want}",
                                     path=path, line=data_line(i))
                try:
                    pos[row] = (float(tokens[xi]), float(tokens[yi]), float(tokens[zi]))
                    col[row] = (int(tokens[ri]), int(tokens[gi]), int(tokens[bi]))
                except ValueError:
                    raise ParseError("vertex row has a non-numeric value", path=path, line=data_line(i))
            positions, colors = pos, col
        elif elem["name"] == "face":
            for i, tokens in rows:
                try:
                    count = int(tokens[0])
                except (ValueError, IndexError):
                    raise ParseError("face row has no index count", path=path, line=data_line(i))
                if count != 3 or len(tokens) != 4:
                    raise ParseError(f"only triangle faces are supported (got {count} indices)",
                                     path=path, line=data_line(i))
                try:
                    faces.append([int(tokens[1]), int(tokens[2]), int(tokens[3])])
                except ValueError:
                    raise ParseError("face row has a non-integer index", path=path, line=data_line(i))
        # other elements: rows were consumed and skipped
    if positions is None:
        raise ParseError("PLY file has no vertex data", path=path)
    face_arr = np.asarray(faces, dtype=np.int64) if faces else np.zeros((0, 3), dtype=np.int64)
    return positions, colors, face_arr


def _parse_binary_body(blob: bytes, offset: int, elements, path: str):
    positions = colors = None
    faces = []
    for elem in elements:
        if all(p[0] == "scalar" for p in elem["properties"]):
            dtype = np.dtype([(p[2], "<" + _PLY_DTYPES[p[1]]) for p in elem["properties"]])
            nbytes = dtype.itemsize * elem["count"]
            if offset + nbytes > len(blob):
                raise ParseError(f"file ends inside element {elem['name']!r} (at byte {len(blob)})", path=path)
            rows = np.frombuffer(blob, dtype=dtype, count=elem["count"], offset=offset)
            offset += nbytes
            if elem["name"] == "vertex":
                positions = np.stack([rows["x"], rows["y"], rows["z"]], axis=1).astype(np.float64)
                colors = np.stack([rows["red"], rows["green"], rows["blue"]], axis=1).astype(np.uint8)
        else:
            count_t = elem["properties"][0][1]
            item_t = elem["properties"][0][2]
            item_dt = np.dtype("<" + _PLY_DTYPES[item_t])
            for _ in range(elem["count"]):
                if offset + 1 > len(blob):
                    raise ParseError(f"file ends inside element {elem['name']!r} (at byte {offset})", path=path)
                count = blob[offset]
                offset += np.dtype(_PLY_DTYPES[count_t]).itemsize
                nbytes = item_dt.itemsize * count
                if offset + nbytes > len(blob):
                    raise ParseError(f"file ends inside a face row (at byte {offset})", path=path)
                if elem["name"] == "face":
                    if count != 3:
                        raise ParseError(f"only triangle faces are supported (got {count} indices "
                                         f"at byte {offset - 1})", path=path)
                    idx = np.frombuffer(blob, dtype=item_dt, count=3, offset=offset)
                    faces.append(idx.astype(np.int64))
                offset += nbytes
    if positions is None:
        raise ParseError("PLY file has no vertex data", path=path)
    face_arr = np.stack(faces) if faces else np.zeros((0, 3), dtype=np.int64)
    return positions, colors, face_arr


def load_segments(path):
    """Parse the segmentation file. Returns (records, scene_center) where
    records is a list of {id, label, vertex_indices} dicts."""
    path = str(path)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read segmentation file: {exc}", path=path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path=path, line=exc.lineno)

    if not isinstance(doc, dict):
        raise SchemaError("segmentation document must be an object", "/")
    if "instances" not in doc:
        raise SchemaError("missing required field", "/instances")
    raw = doc["instances"]
    if not isinstance(raw, list):
        raise SchemaError("instances must be a list", "/instances")
    records = []
    for i, entry in enumerate(raw):
        ptr = f"/instances/{i}"
        if not isinstance(entry, dict):
            raise SchemaError("instance must be an object", ptr)
        records.append({
            "id": _as_int(entry.get("id"), f"{ptr}/id"),
            "label": _as_nonempty_str(entry.get("label"), f"{ptr}/label"),
            "vertex_indices": _as_int_list(entry.get("vertex_indices"), f"{ptr}/vertex_indices"),
        })
    scene_center = None
    if doc.get("scene_center") is not None:
        scene_center = _as_vec(doc["scene_center"], "/scene_center")
    return records, scene_center


def load_scene(mesh_path, segments_path):
    """Load a PLY mesh plus its segmentation. Returns (SceneMesh,
    instances); run validate_scene on the result before building."""
    positions, colors, faces = load_ply(mesh_path)
    records, scene_center = load_segments(segments_path)
    mesh = SceneMesh(vertices=positions, colors=colors, faces=faces, scene_center=scene_center)
    instances = [
        ObjectInstance.from_mesh(mesh, rec["id"], rec["label"], rec["vertex_indices"])
        for rec in records
    ]
    logger.info("loaded scene: %d vertices, %d faces, %d instances",
                mesh.vertex_count, len(mesh.faces), len(instances))
    return mesh, instances


# ---- scene-graph documents ----

def graph_to_dict(graph: SceneGraph) -> dict:
    return {
        "nodes": [
            {
                "id": n.id,
                "label": n.class_label,
                "attributes": n.attributes.to_dict(),
                "centroid": [float(v) for v in n.centroid],
                "aabb": n.aabb.to_dict(),
                "front": None if n.front is None else [float(v) for v in n.front],
                "front_confidence": None if n.front_confidence is None else float(n.front_confidence),
            }
            for n in graph.nodes
        ],
        "edges": [
            {
                "subject": e.subject_id,
                "object": e.object_id,
                "relation": e.relation,
                "distance_m": float(e.distance_m),
                "angle_deg": float(e.angle_deg),
            }
            for e in graph.edges
        ],
        "metadata": graph.metadata,
    }


def save_graph(graph: SceneGraph, path) -> None:
    """Write the graph as JSON. Floats keep full round-trip precision, and
    the byte output is deterministic for equal graphs."""
    doc = graph_to_dict(graph)
    try:
        data = json.dumps(doc, ensure_ascii=False, indent=2, allow_nan=False) + "\n"
    except ValueError as exc:
        raise DataError(f"graph is not serializable: {exc}")
    Path(path).write_bytes(data.encode("utf-8"))


def load_graph(path) -> SceneGraph:
    """Read and schema-check a graph document. Exact inverse of save_graph
    on valid documents."""
    path = str(path)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read graph file: {exc}", path=path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path=path, line=exc.lineno)
    return graph_from_dict(doc)


def graph_from_dict(doc) -> SceneGraph:
    if not isinstance(doc, dict):
        raise SchemaError("graph document must be an object", "/")
    for key in ("nodes", "edges"):
        if key not in doc:
            raise SchemaError("missing required field", f"/{key}")
        if not isinstance(doc[key], list):
            raise SchemaError(f"{key} must be a list", f"/{key}")

    nodes = []
    seen = set()
    for i, raw in enumerate(doc["nodes"]):
        ptr = f"/nodes/{i}"
        if not isinstance(raw, dict):
            raise SchemaError("node must be an object", ptr)
        node_id = _as_int(raw.get("id"), f"{ptr}/id")
        if node_id < 0:
            raise SchemaError("node id must be >= 0", f"{ptr}/id")
        if node_id in seen:
            raise SchemaError(f"duplicate node id {node_id}", f"{ptr}/id")
        seen.add(node_id)
        attrs_raw = raw.get("attributes")
        if not isinstance(attrs_raw, dict):
            raise SchemaError("missing or invalid attributes object", f"{ptr}/attributes")
        kwargs = {}
        for key in ATTRIBUTE_FIELDS:
            kwargs[key] = _as_str(attrs_raw.get(key), f"{ptr}/attributes/{key}")
        extra_raw = attrs_raw.get("extra", {})
        if not isinstance(extra_raw, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in extra_raw.items()
        ):
            raise SchemaError("extra must map strings to strings", f"{ptr}/attributes/extra")
        aabb_raw = raw.get("aabb")
        if not isinstance(aabb_raw, dict):
            raise SchemaError("missing or invalid aabb object", f"{ptr}/aabb")
        front = raw.get("front")
        conf = raw.get("front_confidence")
        if conf is not None and not _is_number(conf):
            raise SchemaError("front_confidence must be a number or null", f"{ptr}/front_confidence")
        nodes.append(Node(
            id=node_id,
            class_label=_as_nonempty_str(raw.get("label"), f"{ptr}/label"),
            attributes=AttributeSet(extra=dict(extra_raw), **kwargs),
            centroid=_as_vec(raw.get("centroid"), f"{ptr}/centroid"),
            aabb=Aabb(_as_vec(aabb_raw.get("min"), f"{ptr}/aabb/min"),
                      _as_vec(aabb_raw.get("max"), f"{ptr}/aabb/max")),
            front=None if front is None else _as_vec(front, f"{ptr}/front"),
            front_confidence=None if conf is None else float(conf),
        ))

    edges = []
    for i, raw in enumerate(doc["edges"]):
        ptr = f"/edges/{i}"
        if not isinstance(raw, dict):
            raise SchemaError("edge must be an object", ptr)
        subject = _as_int(raw.get("subject"), f"{ptr}/subject")
        obj = _as_int(raw.get("object"), f"{ptr}/object")
        for field_name, value in (("subject", subject), ("object", obj)):
            if value not in seen:
                raise SchemaError(f"edge references unknown node {value}", f"{ptr}/{field_name}")
        if not _is_number(raw.get("distance_m")):
            raise SchemaError("distance_m must be a number", f"{ptr}/distance_m")
        if not _is_number(raw.get("angle_deg")):
            raise SchemaError("angle_deg must be a number", f"{ptr}/angle_deg")
        edges.append(Edge(
            subject_id=subject,
            object_id=obj,
            relation=_as_nonempty_str(raw.get("relation"), f"{ptr}/relation"),
            distance_m=float(raw["distance_m"]),
            angle_deg=float(raw["angle_deg"]),
        ))

    metadata = doc.get("metadata", {})
    if not isinstance(metadata, dict):
        raise SchemaError("metadata must be an object", "/metadata")
    return SceneGraph(nodes=nodes, edges=edges, metadata=metadata)


# ---- query sets ----

def load_queries(path) -> list:
    """Read a JSONL query set: one {query, target_id[, category]} object
    per line. Blank lines are skipped."""
    path = str(path)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read queries file: {exc}", path=path)
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", path=path, line=lineno)
        if not isinstance(doc, dict):
            raise ParseError("query record must be an object", path=path, line=lineno)
        if not isinstance(doc.get("query"), str) or not doc["query"].strip():
            raise ParseError("query record needs a nonempty 'query' string", path=path, line=lineno)
        if not _is_int(doc.get("target_id")):
            raise ParseError("query record needs an integer 'target_id'", path=path, line=lineno)
        record = {"query": doc["query"], "target_id": int(doc["target_id"])}
        if doc.get("category") is not None:
            if not isinstance(doc["category"], str):
                raise ParseError("'category' must be a string", path=path, line=lineno)
            record["category"] = doc["category"]
        records.append(record)
    return records


# ---- small validators ----

def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _as_int(value, pointer: str) -> int:
    if not _is_int(value):
        raise SchemaError(f"expected an integer, got {value!r}", pointer)
    return value


def _as_str(value, pointer: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(f"expected a string, got {value!r}", pointer)
    return value


def _as_nonempty_str(value, pointer: str) -> str:
    if not isinstance(value, str) or not value:
        raise SchemaError(f"expected a nonempty string, got {value!r}", pointer)
    return value


def _as_vec(value, pointer: str) -> np.ndarray:
    if not isinstance(value, list) or len(value) != 3 or not all(_is_number(v) for v in value):
        raise SchemaError("expected a list of 3 numbers", pointer)
    arr = np.array([float(v) for v in value], dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise SchemaError("expected finite numbers", pointer)
    return arr


def _as_int_list(value, pointer: str) -> list:
    if not isinstance(value, list) or not all(_is_int(v) for v in value):
        raise SchemaError("expected a list of integers", pointer)
    return value
