"""morphkit: signal-driven animated morphs over declarative vis specs.

The pieces, bottom up: visdoc (spec documents and layout), morphspec
(morph parsing and lint), matcher (partial-spec matching), keyframes
(transition endpoints), expr/signals (the reactive layer), scene (the
simulated environment), engine (the runtime), cli and service (front
ends).
"""

from .config import EngineConfig, load_config
from .engine import Engine, EngineEvent, TweenState, apply_tween
from .errors import (
    ArityError,
    CycleError,
    DivisionByZero,
    EvalError,
    EvalTypeError,
    LayoutError,
    MergeError,
    MorphkitError,
    OrderError,
    ParseError,
    PreconditionError,
    ResolveError,
    SchemaError,
    SemanticError,
    UnknownEntityError,
)
from .keyframes import Keyframe, KeyframeStore, create_final, create_initial, resolve_placeholders
from .matcher import MatchResult, eligible_entries, match_state, match_term
from .morphspec import MorphSpec, StateSpec, TransitionSpec, export_dot, lint, parse_morph
from .scene import Scene, SceneEntity, load_scene, load_trace, query_geometry
from .signals import SignalGraph, SignalRuntime, sample_source
from .visdoc import (
    DataTable,
    MarkLayout,
    VisSpec,
    compute_layout,
    parse_vis_spec,
    path_get,
    path_write,
)

__version__ = "0.1.0"

__all__ = [
    "ArityError",
    "CycleError",
    "DataTable",
    "DivisionByZero",
    "Engine",
    "EngineConfig",
    "EngineEvent",
    "EvalError",
    "EvalTypeError",
    "Keyframe",
    "KeyframeStore",
    "LayoutError",
    "MarkLayout",
    "MatchResult",
    "MergeError",
    "MorphSpec",
    "MorphkitError",
    "OrderError",
    "ParseError",
    "PreconditionError",
    "ResolveError",
    "Scene",
    "SceneEntity",
    "SchemaError",
    "SemanticError",
    "SignalGraph",
    "SignalRuntime",
    "StateSpec",
    "TransitionSpec",
    "TweenState",
    "UnknownEntityError",
    "VisSpec",
    "apply_tween",
    "compute_layout",
    "create_final",
    "create_initial",
    "eligible_entries",
    "export_dot",
    "lint",
    "load_config",
    "load_scene",
    "load_trace",
    "match_state",
    "match_term",
    "parse_morph",
    "parse_vis_spec",
    "path_get",
    "path_write",
    "query_geometry",
    "resolve_placeholders",
    "sample_source",
]
