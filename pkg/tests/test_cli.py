"""Command-line interface: subcommands, exit codes, and printed output."""

import json

import pytest

from scenegraph3d import cli
from scenegraph3d.pipeline import ENV_API_KEY, ENV_API_URL
from scenegraph3d.sceneio import load_graph


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text("[render]\nwidth = 64\nheight = 64\n")
    return str(path)


def run(argv):
    return cli.main(argv)


class TestUsageErrors:
    def test_no_command(self):
        with pytest.raises(SystemExit) as info:
            run([])
        assert info.value.code == cli.EXIT_USAGE

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as info:
            run(["frobnicate"])
        assert info.value.code == cli.EXIT_USAGE

    def test_build_missing_required_flag(self):
        with pytest.raises(SystemExit) as info:
            run(["build", "--scene", "x.ply", "--segments", "y.json"])
        assert info.value.code == cli.EXIT_USAGE

    def test_ground_query_flags_exclusive(self, fixtures_dir):
        with pytest.raises(SystemExit) as info:
            run(["ground", "--graph", str(fixtures_dir / "golden_graph.json"),
                 "--query", "a", "--queries", "b.jsonl"])
        assert info.value.code == cli.EXIT_USAGE

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as info:
            run(["--version"])
        assert info.value.code == 0
        assert "scenegraph3d" in capsys.readouterr().out


class TestValidate:
    def test_scene_ok(self, fixtures_dir, capsys):
        code = run(["validate", "--scene", str(fixtures_dir / "scene.ply"),
                    "--segments", str(fixtures_dir / "segments.json")])
        assert code == cli.EXIT_OK
        assert capsys.readouterr().out.strip() == "OK"

    def test_graph_ok(self, fixtures_dir, capsys):
        code = run(["validate", "--graph", str(fixtures_dir / "golden_graph.json")])
        assert code == cli.EXIT_OK
        assert capsys.readouterr().out.strip() == "OK"

    def test_violations_exit_2(self, fixtures_dir, tmp_path, capsys):
        doc = json.loads((fixtures_dir / "golden_graph.json").read_text())
        doc["edges"][0]["distance_m"] = 99.0
        bad = tmp_path / "bad_graph.json"
        bad.write_text(json.dumps(doc))
        code = run(["validate", "--graph", str(bad)])
        out = capsys.readouterr().out
        assert code == cli.EXIT_DATA
        assert "INVALID (1 violation(s))" in out
        assert "distance" in out

    def test_scene_without_segments(self, fixtures_dir, capsys):
        code = run(["validate", "--scene", str(fixtures_dir / "scene.ply")])
        assert code == cli.EXIT_USAGE
        assert "requires" in capsys.readouterr().err

    def test_scene_and_graph_together(self, fixtures_dir):
        code = run(["validate", "--scene", "a", "--segments", "b", "--graph", "c"])
        assert code == cli.EXIT_USAGE

    def test_no_targets(self):
        assert run(["validate"]) == cli.EXIT_USAGE


class TestBuild:
    def test_offline_build(self, fixtures_dir, tmp_path, small_config, capsys):
        out = tmp_path / "graph.json"
        code = run(["build", "--scene", str(fixtures_dir / "scene.ply"),
                    "--segments", str(fixtures_dir / "segments.json"),
                    "--out", str(out), "--offline", "--views", "4",
                    "--config", small_config,
                    "--references", str(fixtures_dir / "references")])
        assert code == cli.EXIT_OK
        assert f"wrote {out} (5 nodes, 20 edges)" in capsys.readouterr().out
        graph = load_graph(out)
        assert graph.metadata["config"]["rig.num_views"] == 4
        assert graph.metadata["config"]["render.width"] == 64

    def test_dump_views(self, fixtures_dir, tmp_path, small_config):
        out = tmp_path / "graph.json"
        dump = tmp_path / "views"
        code = run(["build", "--scene", str(fixtures_dir / "scene.ply"),
                    "--segments", str(fixtures_dir / "segments.json"),
                    "--out", str(out), "--offline", "--views", "4",
                    "--config", small_config, "--dump-views", str(dump)])
        assert code == cli.EXIT_OK
        assert sorted(p.name for p in (dump / "object_0").glob("*.png")) == [
            "view_00.png", "view_01.png", "view_02.png", "view_03.png"]
        assert (dump / "object_4" / "chosen.txt").exists()

    def test_missing_scene_file(self, fixtures_dir, tmp_path):
        code = run(["build", "--scene", str(tmp_path / "absent.ply"),
                    "--segments", str(fixtures_dir / "segments.json"),
                    "--out", str(tmp_path / "g.json"), "--offline"])
        assert code == cli.EXIT_DATA

    def test_online_without_endpoint_is_service_error(self, fixtures_dir, tmp_path,
                                                      small_config, monkeypatch):
        monkeypatch.delenv(ENV_API_URL, raising=False)
        monkeypatch.delenv(ENV_API_KEY, raising=False)
        code = run(["build", "--scene", str(fixtures_dir / "scene.ply"),
                    "--segments", str(fixtures_dir / "segments.json"),
                    "--out", str(tmp_path / "g.json"), "--views", "4",
                    "--config", small_config])
        assert code == cli.EXIT_SERVICE

    def test_missing_config_file(self, fixtures_dir, tmp_path):
        code = run(["build", "--scene", str(fixtures_dir / "scene.ply"),
                    "--segments", str(fixtures_dir / "segments.json"),
                    "--out", str(tmp_path / "g.json"), "--offline",
                    "--config", str(tmp_path / "absent.ini")])
        assert code == cli.EXIT_DATA


class TestGround:
    def test_single_query(self, fixtures_dir, capsys):
        code = run(["ground", "--graph", str(fixtures_dir / "golden_graph.json"),
                    "--query", "the red chair", "--offline", "--k", "3"])
        assert code == cli.EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["object_id"] == 1
        assert doc["pruned_triplet_count"] == 3
        assert "explanation" in doc

    def test_query_file(self, fixtures_dir, capsys):
        code = run(["ground", "--graph", str(fixtures_dir / "golden_graph.json"),
                    "--queries", str(fixtures_dir / "queries.jsonl"), "--offline"])
        assert code == cli.EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        docs = [json.loads(line) for line in lines]
        assert len(docs) == 5
        assert all({"query", "object_id", "explanation"} <= set(d) for d in docs)

    def test_corrupt_graph(self, tmp_path):
        bad = tmp_path / "graph.json"
        bad.write_text("{not json")
        code = run(["ground", "--graph", str(bad), "--query", "x", "--offline"])
        assert code == cli.EXIT_DATA


class TestEval:
    def test_report_and_stdout(self, fixtures_dir, tmp_path, capsys):
        report_path = tmp_path / "report.json"
        code = run(["eval", "--graph", str(fixtures_dir / "golden_graph.json"),
                    "--queries", str(fixtures_dir / "queries.jsonl"),
                    "--offline", "--report", str(report_path)])
        assert code == cli.EXIT_OK
        out = capsys.readouterr().out
        assert out.startswith("accuracy 0.800 (4/5)")
        assert "adversarial: 0.000 (0/1)" in out
        report = json.loads(report_path.read_text())
        assert report["num_queries"] == 5
        assert report["num_correct"] == 4


class TestRenderViews:
    def test_writes_pngs(self, fixtures_dir, tmp_path):
        out_dir = tmp_path / "views"
        code = run(["render-views", "--scene", str(fixtures_dir / "scene.ply"),
                    "--segments", str(fixtures_dir / "segments.json"),
                    "--object", "3", "--out-dir", str(out_dir),
                    "--views", "4", "--size", "32"])
        assert code == cli.EXIT_OK
        assert sorted(p.name for p in out_dir.glob("*.png")) == [
            "view_00.png", "view_01.png", "view_02.png", "view_03.png"]

    def test_unknown_object_id(self, fixtures_dir, tmp_path):
        code = run(["render-views", "--scene", str(fixtures_dir / "scene.ply"),
                    "--segments", str(fixtures_dir / "segments.json"),
                    "--object", "42", "--out-dir", str(tmp_path / "v")])
        assert code == cli.EXIT_DATA
