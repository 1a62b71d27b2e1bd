"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 external
service error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .core import object_submesh, validate_graph, validate_scene
from .errors import DataError, SceneGraphError, ServiceError
from .front import object_rig
from .grounding import answer_query
from .pipeline import (
    eval_grounding,
    load_config_file,
    make_clients,
    make_pipeline_config,
    run_pipeline,
)
from .render import render_view
from .sceneio import load_graph, load_queries, load_scene, save_graph

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SERVICE = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; this contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scenegraph3d",
                     description="Build viewpoint-invariant 3D scene graphs and ground text queries on them.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for info, -vv for debug logging")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("build", help="build a scene graph from a mesh and its segmentation")
    p.add_argument("--scene", required=True, help="PLY mesh path")
    p.add_argument("--segments", required=True, help="segmentation JSON path")
    p.add_argument("--out", required=True, help="output graph JSON path")
    p.add_argument("--config", help="INI config file")
    p.add_argument("--views", type=int, help="number of rig views (default 12)")
    p.add_argument("--references", help="reference image directory (manifest.json plus images)")
    p.add_argument("--offline", action="store_true", help="use the deterministic offline fakes")
    p.add_argument("--no-enrich", action="store_true", help="keep the geometric relation labels")
    p.add_argument("--dump-views", metavar="DIR", help="write per-object rig renders for debugging")
    p.add_argument("--keep-going", action="store_true",
                   help="drop objects that fail instead of aborting the build")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("ground", help="answer a grounding query over a graph")
    p.add_argument("--graph", required=True, help="graph JSON path")
    which = p.add_mutually_exclusive_group(required=True)
    which.add_argument("--query", help="a single query string")
    which.add_argument("--queries", help="JSONL query file")
    p.add_argument("--k", type=int, help="number of relations kept as context (default 1500)")
    p.add_argument("--config", help="INI config file")
    p.add_argument("--offline", action="store_true")
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("eval", help="evaluate grounding accuracy against labeled queries")
    p.add_argument("--graph", required=True)
    p.add_argument("--queries", required=True, help="JSONL query file with target ids")
    p.add_argument("--report", help="write the full JSON report here")
    p.add_argument("--k", type=int)
    p.add_argument("--config", help="INI config file")
    p.add_argument("--offline", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render-views", help="render one object's rig views to PNG files")
    p.add_argument("--scene", required=True)
    p.add_argument("--segments", required=True)
    p.add_argument("--object", required=True, type=int, help="object id")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--views", type=int)
    p.add_argument("--size", type=int, default=512, help="image width and height (default 512)")
    p.set_defaults(func=cmd_render_views)

    p = sub.add_parser("validate", help="check a scene or a graph against its invariants")
    p.add_argument("--scene")
    p.add_argument("--segments")
    p.add_argument("--graph")
    p.set_defaults(func=cmd_validate)

    return parser


def _config_from_args(args, **extra) -> "PipelineConfig":
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
    overrides = dict(extra)
    if getattr(args, "offline", False):
        overrides["offline"] = True
    if getattr(args, "views", None) is not None:
        overrides["num_views"] = args.views
    if getattr(args, "k", None) is not None:
        overrides["top_k"] = args.k
    return make_pipeline_config(file_values, **overrides)


def cmd_build(args) -> int:
    overrides = {}
    if args.no_enrich:
        overrides["enrich"] = False
    if args.keep_going:
        overrides["keep_going"] = True
    if args.references:
        overrides["references_dir"] = args.references
    if args.dump_views:
        overrides["dump_views_dir"] = args.dump_views
    config = _config_from_args(args, **overrides)
    graph = run_pipeline(config, args.scene, args.segments)
    save_graph(graph, args.out)
    print(f"wrote {args.out} ({len(graph.nodes)} nodes, {len(graph.edges)} edges)")
    return EXIT_OK


def cmd_ground(args) -> int:
    config = _config_from_args(args)
    graph = load_graph(args.graph)
    clients = make_clients(config)
    if args.query is not None:
        result = answer_query(graph, args.query, config.grounding, clients)
        print(json.dumps({
            "object_id": result.object_id,
            "explanation": result.explanation,
            "pruned_triplet_count": result.pruned_triplet_count,
        }, ensure_ascii=False))
    else:
        for record in load_queries(args.queries):
            result = answer_query(graph, record["query"], config.grounding, clients)
            print(json.dumps({
                "query": record["query"],
                "object_id": result.object_id,
                "explanation": result.explanation,
            }, ensure_ascii=False))
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _config_from_args(args)
    graph = load_graph(args.graph)
    queries = load_queries(args.queries)
    clients = make_clients(config)
    report = eval_grounding(graph, queries, config.grounding, clients)
    if args.report:
        Path(args.report).write_text(
            json.dumps(report, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    accuracy = report["accuracy"]
    shown = f"{accuracy:.3f}" if isinstance(accuracy, float) else accuracy
    print(f"accuracy {shown} ({report['num_correct']}/{report['num_queries']})")
    for cat in sorted(report["per_category"]):
        stats = report["per_category"][cat]
        print(f"  {cat}: {stats['accuracy']:.3f} ({stats['num_correct']}/{stats['num_queries']})")
    return EXIT_OK


def cmd_render_views(args) -> int:
    config = _config_from_args(args)
    mesh, instances = load_scene(args.scene, args.segments)
    instance = next((inst for inst in instances if inst.id == args.object), None)
    if instance is None:
        raise DataError(f"no object with id {args.object} in the segmentation")
    positions, colors, faces = object_submesh(mesh, instance)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    poses = object_rig(instance, config.rig)
    for k, pose in enumerate(poses):
        view = render_view(positions, colors, faces, pose, args.size, args.size)
        view.save_png(out_dir / f"view_{k:02d}.png")
    print(f"wrote {len(poses)} views to {out_dir}")
    return EXIT_OK


def cmd_validate(args) -> int:
    scene_mode = args.scene is not None or args.segments is not None
    if scene_mode and (args.scene is None or args.segments is None):
        print("validate: --scene requires --segments (and vice versa)", file=sys.stderr)
        return EXIT_USAGE
    if scene_mode == (args.graph is not None):
        print("validate: needs either --scene with --segments, or --graph", file=sys.stderr)
        return EXIT_USAGE
    if scene_mode:
        mesh, instances = load_scene(args.scene, args.segments)
        violations = validate_scene(mesh, instances)
    else:
        graph = load_graph(args.graph)
        violations = validate_graph(graph)
    if violations:
        for v in violations:
            print(v)
        print(f"INVALID ({len(violations)} violation(s))")
        return EXIT_DATA
    print("OK")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ServiceError as exc:
        logger.error("service failure: %s", exc)
        return EXIT_SERVICE
    except DataError as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    except SceneGraphError as exc:
        logger.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
