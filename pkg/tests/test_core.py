"""Domain types and the scene/graph validators."""

import json

import numpy as np
import pytest

from scenegraph3d.core import (
    Aabb,
    AttributeSet,
    Edge,
    Node,
    ObjectInstance,
    SceneGraph,
    SceneMesh,
    as_vec3,
    object_submesh,
    validate_graph,
    validate_scene,
)
from conftest import scene_from_boxes


def make_attrs(**overrides):
    base = dict(color="red", geometry="boxy", functionality="sits",
                structural_details="solid", caption="a red thing")
    base.update(overrides)
    return AttributeSet(**base)


def make_node(node_id=0, centroid=(0, 0, 0), **overrides):
    kwargs = dict(
        id=node_id,
        class_label="chair",
        attributes=make_attrs(),
        centroid=np.array(centroid, dtype=float),
        aabb=Aabb(np.array(centroid) - 0.5, np.array(centroid) + 0.5),
        front=np.array([1.0, 0.0, 0.0]),
        front_confidence=0.9,
    )
    kwargs.update(overrides)
    return Node(**kwargs)


class TestAsVec3:
    def test_coerces_lists(self):
        v = as_vec3([1, 2, 3])
        assert v.dtype == np.float64
        assert v.shape == (3,)

    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError, match="shape"):
            as_vec3([1, 2])


class TestAabb:
    def test_from_points(self):
        pts = np.array([[0, 0, 0], [1, 2, 3], [-1, 1, 0]], dtype=float)
        box = Aabb.from_points(pts)
        assert np.array_equal(box.min, [-1, 0, 0])
        assert np.array_equal(box.max, [1, 2, 3])

    def test_from_points_rejects_empty(self):
        with pytest.raises(ValueError):
            Aabb.from_points(np.zeros((0, 3)))

    def test_diagonal_and_area(self):
        box = Aabb([0, 0, 0], [3, 4, 12])
        assert box.diagonal() == 13.0
        assert box.xy_area() == 12.0

    def test_contains(self):
        box = Aabb([0, 0, 0], [1, 1, 1])
        assert box.contains([0.5, 0.5, 0.5])
        assert box.contains([1.0, 1.0, 1.0])
        assert not box.contains([1.1, 0.5, 0.5])

    def test_equality(self):
        assert Aabb([0, 0, 0], [1, 1, 1]) == Aabb([0, 0, 0], [1, 1, 1])
        assert Aabb([0, 0, 0], [1, 1, 1]) != Aabb([0, 0, 0], [2, 1, 1])

    def test_to_dict_is_json_serializable(self):
        doc = Aabb(np.array([0.1, 0.2, 0.3]), np.array([1, 2, 3])).to_dict()
        json.dumps(doc)
        assert doc["min"] == [0.1, 0.2, 0.3]


class TestSceneMesh:
    def test_scene_center_defaults_to_vertex_mean(self):
        verts = np.array([[0, 0, 0], [2, 0, 0], [0, 2, 0], [0, 0, 2]], dtype=float)
        mesh = SceneMesh(vertices=verts, colors=np.zeros((4, 3), dtype=np.uint8))
        assert np.allclose(mesh.scene_center, [0.5, 0.5, 0.5])

    def test_explicit_scene_center(self):
        verts = np.zeros((2, 3))
        verts[1] = [1, 1, 1]
        mesh = SceneMesh(vertices=verts, colors=np.zeros((2, 3), dtype=np.uint8),
                         scene_center=[9, 9, 9])
        assert np.array_equal(mesh.scene_center, [9, 9, 9])

    def test_faces_default_empty(self):
        mesh = SceneMesh(vertices=np.zeros((1, 3)), colors=np.zeros((1, 3), dtype=np.uint8))
        assert mesh.faces.shape == (0, 3)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            SceneMesh(vertices=np.zeros((0, 3)), colors=np.zeros((0, 3), dtype=np.uint8))
        with pytest.raises(ValueError):
            SceneMesh(vertices=np.zeros((2, 3)), colors=np.zeros((3, 3), dtype=np.uint8))


class TestObjectInstance:
    def test_from_mesh_derives_geometry(self):
        mesh, instances = scene_from_boxes([((1, 1, 1), (0.5, 0.5, 0.5))])
        inst = instances[0]
        assert np.allclose(inst.centroid, [1, 1, 1])
        assert np.allclose(inst.aabb.min, [0.5, 0.5, 0.5])
        assert np.allclose(inst.aabb.max, [1.5, 1.5, 1.5])
        assert inst.front is None

    def test_from_mesh_tolerates_bad_indices_for_validation(self):
        mesh, _ = scene_from_boxes([((0, 0, 0), (1, 1, 1))])
        inst = ObjectInstance.from_mesh(mesh, 5, "thing", [0, 1, 10_000])
        assert inst.id == 5
        assert np.isfinite(inst.centroid).all()

    def test_with_front_returns_new_instance(self):
        mesh, instances = scene_from_boxes([((0, 0, 0), (1, 1, 1))])
        inst = instances[0]
        updated = inst.with_front([0, 1, 0], 0.8)
        assert inst.front is None
        assert np.array_equal(updated.front, [0, 1, 0])
        assert updated.front_confidence == 0.8


class TestObjectSubmesh:
    def test_extracts_and_remaps(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]], dtype=float)
        colors = np.arange(12, dtype=np.uint8).reshape(4, 3)
        faces = np.array([[0, 1, 2], [1, 2, 3]])
        mesh = SceneMesh(vertices=verts, colors=colors, faces=faces)
        inst = ObjectInstance.from_mesh(mesh, 0, "tri", [0, 1, 2])
        pos, col, sub_faces = object_submesh(mesh, inst)
        assert pos.shape == (3, 3)
        assert np.array_equal(col, colors[:3])
        # the face crossing into vertex 3 is dropped; the kept one is remapped
        assert np.array_equal(sub_faces, [[0, 1, 2]])

    def test_invalid_indices_rejected(self):
        mesh, _ = scene_from_boxes([((0, 0, 0), (1, 1, 1))])
        bad = ObjectInstance.from_mesh(mesh, 0, "thing", [0, 99_999])
        with pytest.raises(ValueError):
            object_submesh(mesh, bad)


class TestAttributeSet:
    def test_to_dict_sorts_extra_keys(self):
        attrs = make_attrs()
        attrs.extra = {"zeta": "1", "alpha": "2"}
        assert list(attrs.to_dict()["extra"]) == ["alpha", "zeta"]

    def test_to_dict_has_all_fields(self):
        doc = AttributeSet().to_dict()
        assert set(doc) == {"color", "geometry", "functionality",
                            "structural_details", "caption", "extra"}


class TestValidateScene:
    def make_valid(self):
        return scene_from_boxes([((0, 0, 0), (1, 1, 1)), ((5, 0, 0), (1, 1, 1))])

    def test_valid_scene_has_no_violations(self):
        mesh, instances = self.make_valid()
        assert validate_scene(mesh, instances) == []

    def test_no_instances(self):
        mesh, _ = self.make_valid()
        assert validate_scene(mesh, []) == ["no instances"]

    def test_duplicate_ids(self):
        mesh, instances = self.make_valid()
        instances[1].id = instances[0].id
        assert any("duplicate id" in v for v in validate_scene(mesh, instances))

    def test_out_of_range_indices(self):
        mesh, instances = self.make_valid()
        bad = ObjectInstance.from_mesh(mesh, 7, "thing", [0, 10_000_000])
        violations = validate_scene(mesh, [bad])
        assert any("out of range" in v for v in violations)

    def test_empty_label_and_indices(self):
        mesh, _ = self.make_valid()
        inst = ObjectInstance(id=0, class_label="", vertex_indices=[],
                              centroid=[0, 0, 0], aabb=Aabb([0, 0, 0], [0, 0, 0]))
        violations = validate_scene(mesh, [inst])
        assert any("empty class_label" in v for v in violations)
        assert any("empty vertex_indices" in v for v in violations)

    def test_centroid_outside_aabb(self):
        mesh, instances = self.make_valid()
        inst = instances[0]
        bad = ObjectInstance(id=0, class_label="x", vertex_indices=inst.vertex_indices,
                             centroid=[50, 0, 0], aabb=inst.aabb)
        assert any("centroid outside aabb" in v for v in validate_scene(mesh, [bad]))

    def test_front_invariants(self):
        mesh, instances = self.make_valid()
        not_unit = instances[0].with_front(np.array([2.0, 0, 0]) / 1.0, 0.5)
        tilted = instances[1].with_front(np.array([0.8, 0, 0.6]), 0.5)
        violations = validate_scene(mesh, [not_unit, tilted])
        assert any("not unit length" in v for v in violations)
        assert any("not horizontal" in v for v in violations)

    def test_confidence_range(self):
        mesh, instances = self.make_valid()
        bad = instances[0].with_front([1, 0, 0], 1.5)
        assert any("outside [0, 1]" in v for v in validate_scene(mesh, [bad]))

    def test_non_finite_vertices(self):
        verts = np.array([[0, 0, 0], [np.nan, 0, 0]])
        mesh = SceneMesh(vertices=verts, colors=np.zeros((2, 3), dtype=np.uint8),
                         scene_center=[0, 0, 0])
        inst = ObjectInstance.from_mesh(mesh, 0, "x", [0])
        assert any("non-finite" in v for v in validate_scene(mesh, [inst]))

    def test_bad_faces(self):
        verts = np.zeros((3, 3))
        verts[1] = [1, 0, 0]
        verts[2] = [0, 1, 0]
        mesh = SceneMesh(vertices=verts, colors=np.zeros((3, 3), dtype=np.uint8),
                         faces=np.array([[0, 1, 9]]))
        inst = ObjectInstance.from_mesh(mesh, 0, "x", [0, 1, 2])
        assert any("out-of-range vertices" in v for v in validate_scene(mesh, [inst]))


class TestValidateGraph:
    def make_valid(self):
        nodes = [make_node(0, (0, 0, 0)), make_node(1, (3, 0, 0))]
        edges = [
            Edge(subject_id=0, object_id=1, relation="near", distance_m=3.0, angle_deg=180.0),
            Edge(subject_id=1, object_id=0, relation="near", distance_m=3.0, angle_deg=0.0),
        ]
        return SceneGraph(nodes=nodes, edges=edges, metadata={})

    def test_valid_graph(self):
        assert validate_graph(self.make_valid()) == []

    def test_duplicate_node_ids(self):
        graph = self.make_valid()
        graph.nodes[1].id = 0
        assert any("duplicate id" in v for v in validate_graph(graph))

    def test_self_loop_and_unknown_endpoint(self):
        graph = self.make_valid()
        graph.edges[0].subject_id = 1   # 1 -> 1 self loop
        graph.edges[1].object_id = 42
        violations = validate_graph(graph)
        assert any("self loop" in v for v in violations)
        assert any("unknown node ids [42]" in v for v in violations)

    def test_empty_relation_and_caption(self):
        graph = self.make_valid()
        graph.edges[0].relation = ""
        graph.nodes[0].attributes.caption = ""
        violations = validate_graph(graph)
        assert any("empty relation" in v for v in violations)
        assert any("empty caption" in v for v in violations)

    def test_distance_consistency(self):
        graph = self.make_valid()
        graph.edges[0].distance_m = 3.1
        assert any("differs from centroid distance" in v for v in validate_graph(graph))

    def test_distance_within_tolerance_accepted(self):
        graph = self.make_valid()
        graph.edges[0].distance_m = 3.0 + 5e-7
        assert validate_graph(graph) == []

    def test_angle_range(self):
        graph = self.make_valid()
        graph.edges[0].angle_deg = -180.0
        assert any("outside" in v for v in validate_graph(graph))


class TestSceneGraph:
    def test_node_lookup(self):
        graph = SceneGraph(nodes=[make_node(3)], edges=[])
        assert graph.has_node(3)
        assert not graph.has_node(4)
        assert graph.node_by_id(3).id == 3

    def test_equality(self):
        a = SceneGraph(nodes=[make_node(0)], edges=[], metadata={"k": 1})
        b = SceneGraph(nodes=[make_node(0)], edges=[], metadata={"k": 1})
        c = SceneGraph(nodes=[make_node(1)], edges=[], metadata={"k": 1})
        assert a == b
        assert a != c
