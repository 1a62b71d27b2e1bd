"""Training-free 3D scene graphs with viewpoint-invariant spatial relations.

The package turns a segmented colored mesh into a directed scene graph:
every object gets a front direction (chosen by rendering a camera rig
around it and scoring the views), multi-view visual attributes, and dense
pairwise spatial relations expressed in each object's own frame.  Natural
language queries are answered over the graph after pruning the relation
set down to the most query-relevant triplets.
"""

from .core import (
    Aabb,
    AttributeSet,
    Edge,
    Node,
    ObjectInstance,
    PairGeometry,
    SceneGraph,
    SceneMesh,
    validate_graph,
    validate_scene,
)
from .clients import ClientConfig, PerceptionClients, ReferenceDatabase
from .errors import (
    DataError,
    DegenerateGeometryError,
    FileAccessError,
    MissingFrontError,
    ParseError,
    ResponseParseError,
    SceneGraphError,
    SceneValidationError,
    SchemaError,
    ServiceError,
    UnresolvableAnswerError,
)
from .front import FrontEstimate, FrontEstimateConfig, estimate_front
from .geometry import CameraPose, RigConfig, rig_positions, signed_planar_angle_deg
from .grounding import GroundingConfig, GroundingResult, answer_query, prune_relations
from .pipeline import PipelineConfig, eval_grounding, make_pipeline_config, run_pipeline
from .relations import RelationRuleConfig, build_edges, classify_pair
from .sceneio import load_graph, load_ply, load_scene, save_graph

__version__ = "0.1.0"

__all__ = [
    "Aabb",
    "AttributeSet",
    "CameraPose",
    "ClientConfig",
    "DataError",
    "DegenerateGeometryError",
    "Edge",
    "FileAccessError",
    "FrontEstimate",
    "FrontEstimateConfig",
    "GroundingConfig",
    "GroundingResult",
    "MissingFrontError",
    "Node",
    "ObjectInstance",
    "PairGeometry",
    "ParseError",
    "PerceptionClients",
    "PipelineConfig",
    "ReferenceDatabase",
    "RelationRuleConfig",
    "ResponseParseError",
    "RigConfig",
    "SceneGraph",
    "SceneGraphError",
    "SceneMesh",
    "SceneValidationError",
    "SchemaError",
    "ServiceError",
    "UnresolvableAnswerError",
    "answer_query",
    "build_edges",
    "classify_pair",
    "estimate_front",
    "eval_grounding",
    "load_graph",
    "load_ply",
    "load_scene",
    "make_pipeline_config",
    "prune_relations",
    "rig_positions",
    "run_pipeline",
    "save_graph",
    "signed_planar_angle_deg",
    "validate_graph",
    "validate_scene",
    "__version__",
]
