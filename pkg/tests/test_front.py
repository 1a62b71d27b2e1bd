"""Front-direction estimation: threshold logic, ambiguity resolution,
fallback flags, and view dumping."""

import dataclasses

import numpy as np
import pytest

from conftest import StubClients, scene_from_boxes
from scenegraph3d.errors import DegenerateGeometryError
from scenegraph3d.front import FrontEstimate, FrontEstimateConfig, estimate_front, object_rig
from scenegraph3d.geometry import RigConfig, front_direction
from scenegraph3d.render import RasterImage

SMALL = (64, 64)


def one_box_scene(center=(3.0, 0.0, 0.0), scene_center=(0.0, 0.0, 0.0)):
    mesh, instances = scene_from_boxes(
        [(center, (0.3, 0.3, 0.3))], labels=["chair"], scene_center=scene_center)
    return mesh, instances[0]


def four_view_config():
    return FrontEstimateConfig(rig=RigConfig(num_views=4))


class TestConfig:
    def test_threshold_range(self):
        with pytest.raises(ValueError):
            FrontEstimateConfig(front_threshold=1.5)
        with pytest.raises(ValueError):
            FrontEstimateConfig(front_threshold=-0.1)

    def test_defaults(self):
        config = FrontEstimateConfig()
        assert config.front_threshold == 0.5
        assert config.rig.num_views == 12


class TestObjectRig:
    def test_radius_and_center(self):
        mesh, inst = one_box_scene()
        poses = object_rig(inst, RigConfig(num_views=8))
        diag = inst.aabb.diagonal()
        expected_radius = max(1.5 * diag, 0.5)
        assert len(poses) == 8
        for pose in poses:
            assert np.linalg.norm(pose.position - inst.centroid) == pytest.approx(expected_radius)
            assert pose.position[2] == pytest.approx(inst.centroid[2])
            assert np.allclose(pose.target, inst.centroid)

    def test_minimum_radius_floor(self):
        mesh, inst = one_box_scene(center=(0.0, 0.0, 0.0))
        tiny_mesh, tiny = scene_from_boxes([((0, 0, 0), (0.01, 0.01, 0.01))])
        poses = object_rig(tiny[0], RigConfig())
        assert np.linalg.norm(poses[0].position - tiny[0].centroid) == pytest.approx(0.5)


class TestEstimateFront:
    def test_single_winner(self):
        mesh, inst = one_box_scene()
        clients = StubClients(confidences=[0.1, 0.9, 0.2, 0.1], reference=object())
        est = estimate_front(inst, mesh, four_view_config(), clients, image_size=SMALL)
        assert est.chosen_view == 1
        assert est.confidence == pytest.approx(0.9)
        assert not est.low_confidence and not est.ambiguous and not est.no_reference

    def test_front_is_unit_horizontal_from_chosen_pose(self):
        mesh, inst = one_box_scene()
        config = four_view_config()
        clients = StubClients(confidences=[0.1, 0.9, 0.2, 0.1], reference=object())
        est = estimate_front(inst, mesh, config, clients, image_size=SMALL)
        poses = object_rig(inst, config.rig)
        expected = front_direction(poses[1].position, inst.centroid)
        assert np.allclose(est.front, expected, atol=1e-12)
        assert np.linalg.norm(est.front) == pytest.approx(1.0, abs=1e-9)
        assert est.front[2] == 0.0

    def test_none_above_threshold_falls_back_to_argmax(self):
        mesh, inst = one_box_scene()
        clients = StubClients(confidences=[0.2, 0.4, 0.3, 0.1], reference=object())
        est = estimate_front(inst, mesh, four_view_config(), clients, image_size=SMALL)
        assert est.chosen_view == 1
        assert est.low_confidence
        assert not est.ambiguous

    def test_threshold_is_strict(self):
        # a confidence exactly at the threshold does not clear it
        mesh, inst = one_box_scene()
        clients = StubClients(confidences=[0.5, 0.5, 0.5, 0.5], reference=object())
        est = estimate_front(inst, mesh, four_view_config(), clients, image_size=SMALL)
        assert est.low_confidence
        assert est.chosen_view == 0

    def test_ambiguity_resolved_toward_scene_center(self):
        # Box at (3, 0, 0), scene center at the origin. With a 4-view rig the
        # candidate fronts are the four axis directions; views 1 and 3 both
        # clear the threshold and view 1 (front pointing at the center) wins
        # even though view 3 has the higher confidence.
        mesh, inst = one_box_scene(center=(3.0, 0.0, 0.0), scene_center=(0.0, 0.0, 0.0))
        clients = StubClients(confidences=[0.1, 0.8, 0.1, 0.9], reference=object())
        est = estimate_front(inst, mesh, four_view_config(), clients, image_size=SMALL)
        assert est.chosen_view == 1
        assert est.confidence == pytest.approx(0.8)
        assert est.ambiguous
        assert not est.low_confidence
        assert np.allclose(est.front, [-1.0, 0.0, 0.0], atol=1e-9)

    def test_ambiguity_with_center_on_centroid_keeps_best_view(self):
        mesh, inst = one_box_scene(center=(3.0, 0.0, 0.0))
        mesh = dataclasses.replace(mesh, scene_center=inst.centroid.copy())
        clients = StubClients(confidences=[0.6, 0.9, 0.7, 0.8], reference=object())
        est = estimate_front(inst, mesh, four_view_config(), clients, image_size=SMALL)
        assert est.chosen_view == 1
        assert est.ambiguous
        assert est.low_confidence

    def test_missing_reference_sets_flag(self):
        mesh, inst = one_box_scene()
        clients = StubClients(reference="unset")   # lookup returns None
        est = estimate_front(inst, mesh, four_view_config(), clients, image_size=SMALL)
        assert est.no_reference
        assert est.low_confidence    # uniform 0.25 never clears 0.5

    def test_reference_forwarded_to_judgment(self):
        mesh, inst = one_box_scene()
        sentinel = object()
        seen = {}

        def confidences(reference, views, class_label):
            seen["reference"] = reference
            return [1.0] + [0.0] * (len(views) - 1)

        clients = StubClients(confidences=confidences, reference=sentinel)
        est = estimate_front(inst, mesh, four_view_config(), clients, image_size=SMALL)
        assert seen["reference"] is sentinel
        assert not est.no_reference

    def test_views_match_rig_size(self):
        mesh, inst = one_box_scene()
        clients = StubClients(reference="unset")
        estimate_front(inst, mesh, FrontEstimateConfig(rig=RigConfig(num_views=6)),
                       clients, image_size=SMALL)
        judged = [c for c in clients.calls if c[0] == "identify_front_view"]
        assert judged == [("identify_front_view", "chair", 6)]

    def test_zero_extent_object_rejected(self):
        mesh, instances = scene_from_boxes([((1.0, 1.0, 1.0), (0.0, 0.0, 0.0))])
        clients = StubClients()
        with pytest.raises(DegenerateGeometryError):
            estimate_front(instances[0], mesh, four_view_config(), clients, image_size=SMALL)

    def test_dump_views_writes_images_and_choice(self, tmp_path):
        mesh, inst = one_box_scene()
        clients = StubClients(confidences=[0.1, 0.9, 0.2, 0.1], reference=object())
        est = estimate_front(inst, mesh, four_view_config(), clients,
                             image_size=SMALL, dump_dir=tmp_path)
        out = tmp_path / f"object_{inst.id}"
        pngs = sorted(p.name for p in out.glob("view_*.png"))
        assert pngs == ["view_00.png", "view_01.png", "view_02.png", "view_03.png"]
        assert (out / "chosen.txt").read_text() == f"{est.chosen_view}\n"
        img = RasterImage.load_png(out / "view_01.png")
        assert (img.width, img.height) == SMALL

    def test_result_is_plain_dataclass(self):
        est = FrontEstimate(front=np.array([1.0, 0.0, 0.0]), confidence=0.9, chosen_view=2)
        assert not est.low_confidence and not est.no_reference and not est.ambiguous
