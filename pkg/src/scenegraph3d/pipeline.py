"""End-to-end orchestration: load and validate a scene, estimate every
object's front direction, extract attributes, build the dense edge set,
and assemble the final graph with reproducibility metadata.

Stages synchronize at their boundaries (all fronts before attributes, all
attributes before edges); within a stage, objects are processed by a
bounded worker pool.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from .attributes import extract_object_attributes
from .clients import ClientConfig, PerceptionClients, ReferenceDatabase
from .core import Node, SceneGraph, validate_scene
from .errors import SceneGraphError, SceneValidationError
from .front import FrontEstimateConfig, estimate_front, object_rig
from .geometry import RigConfig
from .grounding import GroundingConfig, answer_query
from .relations import RelationRuleConfig, build_edges
from .sceneio import load_scene
from .errors import UnresolvableAnswerError

logger = logging.getLogger(__name__)

ENV_API_URL = "VIZOR_API_URL"
ENV_API_KEY = "VIZOR_API_KEY"


@dataclass
class PipelineConfig:
    """Everything a build needs. The front config owns the rig."""

    front: FrontEstimateConfig = field(default_factory=FrontEstimateConfig)
    relations: RelationRuleConfig = field(default_factory=RelationRuleConfig)
    grounding: GroundingConfig = field(default_factory=GroundingConfig)
    client: ClientConfig = field(default_factory=ClientConfig)
    render_width: int = 512
    render_height: int = 512
    enrich: bool = True
    keep_going: bool = False
    workers: int = 4
    references_dir: str = ""
    dump_views_dir: str = ""

    def __post_init__(self):
        if self.render_width <= 0 or self.render_height <= 0:
            raise ValueError("render size must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def rig(self) -> RigConfig:
        return self.front.rig

    def to_dict(self) -> dict:
        """Flat, JSON-stable view of all effective settings."""
        return {
            "rig.num_views": self.rig.num_views,
            "rig.radius_scale": self.rig.radius_scale,
            "rig.min_radius_m": self.rig.min_radius_m,
            "front.threshold": self.front.front_threshold,
            "relations.sector_width_deg": self.relations.sector_width_deg,
            "relations.contact_epsilon_m": self.relations.contact_epsilon_m,
            "relations.overlap_min": self.relations.overlap_min,
            "relations.near_scale": self.relations.near_scale,
            "relations.far_fraction": self.relations.far_fraction,
            "grounding.top_k": self.grounding.top_k,
            "client.model": self.client.model,
            "client.offline": self.client.offline,
            "render.width": self.render_width,
            "render.height": self.render_height,
            "enrich": self.enrich,
        }


def config_hash(config: PipelineConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def load_config_file(path) -> dict:
    """Read an INI-style config file into {section: {key: value}}."""
    parser = configparser.ConfigParser()
    read = parser.read(str(path))
    if not read:
        raise SceneValidationError([f"config file not found: {path}"])
    return {section: dict(parser.items(section)) for section in parser.sections()}


def make_pipeline_config(file_values: dict = None, env: dict = None, **overrides) -> PipelineConfig:
    """Assemble a PipelineConfig with precedence: defaults, then config
    file values, then the VIZOR_API_URL / VIZOR_API_KEY environment
    variables, then explicit overrides (CLI flags)."""
    file_values = file_values or {}
    env = os.environ if env is None else env

    def section(name):
        return file_values.get(name, {})

    def pick(sec, key, cast, default):
        raw = section(sec).get(key)
        if raw is None:
            return default
        if cast is bool:
            return str(raw).strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)

    rig = RigConfig(
        num_views=pick("rig", "num_views", int, 12),
        radius_scale=pick("rig", "radius_scale", float, 1.5),
        min_radius_m=pick("rig", "min_radius_m", float, 0.5),
    )
    front = FrontEstimateConfig(rig=rig, front_threshold=pick("front", "threshold", float, 0.5))
    relations = RelationRuleConfig(
        sector_width_deg=pick("relations", "sector_width_deg", float, 45.0),
        contact_epsilon_m=pick("relations", "contact_epsilon_m", float, 0.05),
        overlap_min=pick("relations", "overlap_min", float, 0.3),
        near_scale=pick("relations", "near_scale", float, 1.5),
        far_fraction=pick("relations", "far_fraction", float, 0.5),
    )
    grounding = GroundingConfig(top_k=pick("grounding", "top_k", int, 1500))
    client = ClientConfig(
        endpoint_url=env.get(ENV_API_URL) or pick("client", "url", str, ""),
        api_key=env.get(ENV_API_KEY) or pick("client", "key", str, ""),
        model=pick("client", "model", str, "gpt-4o"),
        timeout_s=pick("client", "timeout_s", float, 60.0),
        max_retries=pick("client", "max_retries", int, 2),
        max_concurrent=pick("client", "max_concurrent", int, 4),
        offline=pick("client", "offline", bool, False),
    )
    config = PipelineConfig(
        front=front,
        relations=relations,
        grounding=grounding,
        client=client,
        render_width=pick("render", "width", int, 512),
        render_height=pick("render", "height", int, 512),
        enrich=pick("pipeline", "enrich", bool, True),
        keep_going=pick("pipeline", "keep_going", bool, False),
        workers=pick("pipeline", "workers", int, 4),
        references_dir=pick("client", "references_dir", str, ""),
    )
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "num_views":
            config = replace(config, front=replace(config.front, rig=replace(config.front.rig, num_views=value)))
        elif key == "offline":
            config = replace(config, client=replace(config.client, offline=value))
        elif key == "top_k":
            config = replace(config, grounding=replace(config.grounding, top_k=value))
        elif hasattr(config, key):
            config = replace(config, **{key: value})
        else:
            raise ValueError(f"unknown config override {key!r}")
    return config


def make_clients(config: PipelineConfig, transport=None) -> PerceptionClients:
    reference_db = None
    if config.references_dir:
        reference_db = ReferenceDatabase.load(config.references_dir)
    return PerceptionClients(config.client, reference_db=reference_db, transport=transport)


def _run_stage(items, worker, workers: int, keep_going: bool, stage: str):
    """Apply worker to every item, preserving order. Returns (results,
    failures) where failures maps item index to the error message."""
    results = [None] * len(items)
    failures = {}

    def run(i):
        return worker(items[i])

    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {i: pool.submit(run, i) for i in range(len(items))}
            for i, fut in futures.items():
                try:
                    results[i] = fut.result()
                except SceneGraphError as exc:
                    if not keep_going:
                        raise
                    failures[i] = str(exc)
    else:
        for i in range(len(items)):
            try:
                results[i] = run(i)
            except SceneGraphError as exc:
                if not keep_going:
                    raise
                failures[i] = str(exc)
    for i, msg in failures.items():
        logger.warning("%s failed for object %s: %s", stage, items[i].id, msg)
    return results, failures


def run_pipeline(config: PipelineConfig, mesh_path, segments_path, clients: PerceptionClients = None) -> SceneGraph:
    """Build the scene graph for one scene."""
    started = time.monotonic()
    mesh, instances = load_scene(mesh_path, segments_path)
    violations = validate_scene(mesh, instances)
    if violations:
        raise SceneValidationError(violations)
    if clients is None:
        clients = make_clients(config)

    image_size = (config.render_width, config.render_height)
    dump_dir = config.dump_views_dir or None
    timings = {}
    warnings = []

    t0 = time.monotonic()
    estimates, _ = _run_stage(
        instances,
        lambda inst: estimate_front(inst, mesh, config.front, clients, image_size, dump_dir),
        config.workers, config.keep_going, "front estimation",
    )
    timings["front_s"] = time.monotonic() - t0
    kept = []
    for inst, est in zip(instances, estimates):
        if est is None:
            warnings.append(f"object {inst.id} dropped: front estimation failed")
            continue
        kept.append((inst.with_front(est.front, est.confidence), est))

    t0 = time.monotonic()
    survivors = [inst for inst, _ in kept]
    est_by_id = {inst.id: est for inst, est in kept}
    attr_results, _ = _run_stage(
        survivors,
        lambda inst: extract_object_attributes(
            inst, mesh, object_rig(inst, config.rig), est_by_id[inst.id].chosen_view,
            clients, image_size,
        ),
        config.workers, config.keep_going, "attribute extraction",
    )
    timings["attributes_s"] = time.monotonic() - t0

    nodes = []
    final_instances = []
    for (inst, est), attrs in zip(kept, attr_results):
        if attrs is None:
            warnings.append(f"object {inst.id} dropped: attribute extraction failed")
            continue
        final_instances.append(inst)
        nodes.append(Node(
            id=inst.id,
            class_label=inst.class_label,
            attributes=attrs,
            centroid=inst.centroid,
            aabb=inst.aabb,
            front=inst.front,
            front_confidence=inst.front_confidence,
        ))

    t0 = time.monotonic()
    edges = build_edges(final_instances, mesh, config.relations, clients, config.enrich)
    timings["edges_s"] = time.monotonic() - t0

    low_confidence = sorted(inst.id for (inst, est) in kept if est.low_confidence)
    no_reference = sorted(inst.id for (inst, est) in kept if est.no_reference)
    metadata = {
        "scene": Path(str(mesh_path)).stem,
        "config_hash": config_hash(config),
        "config": config.to_dict(),
        "num_nodes": len(nodes),
        "num_edges": len(edges),
        "offline": config.client.offline,
        "low_confidence_objects": low_confidence,
        "no_reference_objects": no_reference,
    }
    if warnings:
        metadata["warnings"] = warnings
    if not config.client.offline:
        # timings and timestamps are omitted offline so builds are byte-identical
        metadata["created"] = datetime.now(timezone.utc).isoformat()
        timings["total_s"] = time.monotonic() - started
        metadata["timings"] = {k: round(v, 3) for k, v in sorted(timings.items())}
    graph = SceneGraph(nodes=nodes, edges=edges, metadata=metadata)
    logger.info("built graph: %d nodes, %d edges", len(nodes), len(edges))
    return graph


def eval_grounding(graph: SceneGraph, queries: list, config: GroundingConfig, clients) -> dict:
    """Run every query and report accuracy. Unresolvable answers count as
    incorrect. With zero queries the accuracy is reported as "n/a"."""
    per_query = []
    correct = 0
    categories = {}
    for record in queries:
        entry = {"query": record["query"], "target_id": record["target_id"]}
        if "category" in record:
            entry["category"] = record["category"]
        try:
            result = answer_query(graph, record["query"], config, clients)
            entry["predicted_id"] = result.object_id
            entry["explanation"] = result.explanation
            entry["correct"] = result.object_id == record["target_id"]
        except UnresolvableAnswerError as exc:
            entry["predicted_id"] = None
            entry["error"] = str(exc)
            entry["correct"] = False
        if entry["correct"]:
            correct += 1
        cat = record.get("category")
        if cat is not None:
            stats = categories.setdefault(cat, {"num_queries": 0, "num_correct": 0})
            stats["num_queries"] += 1
            stats["num_correct"] += int(entry["correct"])
        per_query.append(entry)

    total = len(per_query)
    for stats in categories.values():
        stats["accuracy"] = stats["num_correct"] / stats["num_queries"]
    return {
        "num_queries": total,
        "num_correct": correct,
        "accuracy": (correct / total) if total else "n/a",
        "per_category": {k: categories[k] for k in sorted(categories)},
        "queries": per_query,
    }
