"""Natural-language object grounding over a scene graph.

The query and every edge triplet ("subject relation object") are embedded;
only the top-K most query-similar edges survive as context. Nodes are
never pruned: the answering model always sees every object with its full
attributes. The model's reply is parsed back to a node id.
"""

from __future__ import annotations

import hashlib
import logging
import re
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .core import SceneGraph
from .errors import UnresolvableAnswerError

logger = logging.getLogger(__name__)

_EMBED_CACHE_LIMIT = 8
_embed_cache = OrderedDict()


@dataclass
class GroundingConfig:
    top_k: int = 1500
    embed_dim: int = 256    # informational; the pruner only needs cosines

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass
class GroundingResult:
    object_id: int
    explanation: str
    pruned_triplet_count: int


def triplet_strings(graph: SceneGraph) -> list:
    """One "<subject label> <relation> <object label>" string per edge, in
    edge order. Returns (edge index, string) pairs."""
    out = []
    for i, edge in enumerate(graph.edges):
        subject = graph.node_by_id(edge.subject_id).class_label
        obj = graph.node_by_id(edge.object_id).class_label
        out.append((i, f"{subject} {edge.relation} {obj}"))
    return out


def _triplet_matrix(graph: SceneGraph, clients) -> np.ndarray:
    """Embeddings of all triplet strings, cached per graph content and
    embedding space."""
    triplets = [t for _, t in triplet_strings(graph)]
    hasher = hashlib.sha256()
    for part in clients.cache_key():
        hasher.update(str(part).encode("utf-8"))
        hasher.update(b"\x1f")
    for t in triplets:
        hasher.update(t.encode("utf-8"))
        hasher.update(b"\x1e")
    key = hasher.hexdigest()
    if key in _embed_cache:
        _embed_cache.move_to_end(key)
        return _embed_cache[key]
    matrix = np.stack([clients.embed_text(t) for t in triplets]) if triplets else np.zeros((0, 1))
    _embed_cache[key] = matrix
    while len(_embed_cache) > _EMBED_CACHE_LIMIT:
        _embed_cache.popitem(last=False)
    return matrix


def prune_relation_indices(graph: SceneGraph, query: str, top_k: int, clients) -> list:
    """Indices of the top_k edges most similar to the query, in descending
    similarity order; equal similarities break toward the lower edge index."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    if not graph.edges:
        return []
    matrix = _triplet_matrix(graph, clients)
    qv = clients.embed_text(query)
    sims = matrix @ qv  # embeddings are unit vectors, so the dot is the cosine
    order = sorted(range(len(graph.edges)), key=lambda i: (-float(sims[i]), i))
    return order[:top_k]


def prune_relations(graph: SceneGraph, query: str, top_k: int, clients) -> list:
    """The pruned edge list itself (see prune_relation_indices)."""
    return [graph.edges[i] for i in prune_relation_indices(graph, query, top_k, clients)]


def build_grounding_context(graph: SceneGraph, pruned_edges: list) -> str:
    """Answering context: every node with full attributes, then the pruned
    relations."""
    lines = ["NODES:"]
    for node in graph.nodes:
        a = node.attributes
        parts = [
            f"- id {node.id}",
            f"label: {node.class_label}",
            f"color: {a.color}",
            f"geometry: {a.geometry}",
            f"functionality: {a.functionality}",
            f"structural_details: {a.structural_details}",
            f"caption: {a.caption}",
        ]
        parts.extend(f"{k}: {a.extra[k]}" for k in sorted(a.extra))
        lines.append(" | ".join(parts))
    lines.append("RELATIONS:")
    for edge in pruned_edges:
        subject = graph.node_by_id(edge.subject_id).class_label
        obj = graph.node_by_id(edge.object_id).class_label
        lines.append(f"- {subject} (id {edge.subject_id}) {edge.relation} {obj} (id {edge.object_id})")
    return "\n".join(lines)


def parse_answer(response: str, graph: SceneGraph) -> int:
    """Resolve a model reply to a node id: first any integer that is a
    node id, then an exact caption substring, then a class-label word."""
    for match in re.finditer(r"\d+", response):
        candidate = int(match.group())
        if graph.has_node(candidate):
            return candidate

    lowered = response.lower()
    best = None  # (caption length, -id)
    for node in graph.nodes:
        caption = node.attributes.caption.lower()
        if caption and caption in lowered:
            rank = (len(caption), -node.id)
            if best is None or rank > best[0]:
                best = (rank, node.id)
    if best is not None:
        return best[1]

    best = None
    for node in graph.nodes:
        label = node.class_label.lower()
        if label and re.search(rf"\b{re.escape(label)}\b", lowered):
            rank = (len(label), -node.id)
            if best is None or rank > best[0]:
                best = (rank, node.id)
    if best is not None:
        return best[1]

    raise UnresolvableAnswerError(response)


def answer_query(graph: SceneGraph, query: str, config: GroundingConfig, clients) -> GroundingResult:
    """Answer one grounding query over the graph."""
    if not graph.nodes:
        raise ValueError("cannot ground a query over an empty graph")
    from .clients import fill_prompt, load_prompt

    pruned = prune_relations(graph, query, config.top_k, clients)
    context = build_grounding_context(graph, pruned)
    prompt = fill_prompt(load_prompt("ground"), query=query)
    response = clients.complete_text(prompt, context)
    node_id = parse_answer(response, graph)
    return GroundingResult(object_id=node_id, explanation=response, pruned_triplet_count=len(pruned))
