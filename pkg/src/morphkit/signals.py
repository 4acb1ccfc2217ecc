"""The reactive layer: signal specifications, sampling, and propagation.

A morph declares two kinds of signals. Source-based signals read the scene:
non-deictic ones sample an entity's own state (a hand's pinch, the head's
position), deictic ones resolve a source-to-target relationship first (the
surface a vis is touching) and derive a value from it. Expression signals
combine other signals arithmetically.

Values are runtime-tagged (boolean, number, vec3, rotation, text); nothing
is enforced at declaration time. A signal that faults during a tick keeps
its previous value and the fault is surfaced to the engine, which turns it
into a diagnostic event; booleans fall back to false and numbers to zero
before their first good sample, so triggers never see half-initialized
state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import expr
from .errors import CycleError, EvalError, SchemaError, SemanticError
from .scene import GeoResolution, SceneSnapshot, query_geometry
from .vecmath import Rotation, Vec3

SOURCES = ("hand", "head", "vis", "ui", "object")
HANDEDNESS = ("left", "right", "any")
TARGETS = ("mark", "axis", "surface", "head", "vis", "object")
CRITERIA = ("select", "touch", "nearest")
TARGETS_NEEDING_CRITERIA = ("mark", "axis", "surface", "vis", "object")
VALUES = (
    "position",
    "rotation",
    "scale",
    "select",
    "pinch",
    "distance",
    "intersection",
    "angle",
    "boolean",
    "uivalue",
)
NON_DEICTIC_VALUES = ("position", "rotation", "scale", "select", "pinch", "uivalue")
DEICTIC_VALUES = ("position", "rotation", "scale", "distance", "intersection", "angle", "boolean")


@dataclass(frozen=True)
class SourceSignalSpec:
    name: str
    source: str
    handedness: str | None = None
    target: str | None = None
    criteria: str | None = None
    value: str = "boolean"
    entity: str | None = None  # optional explicit binding for ui/object sources

    @property
    def deictic(self) -> bool:
        return self.target is not None

    def to_json(self) -> dict:
        out = {"name": self.name, "source": self.source, "value": self.value}
        if self.handedness is not None:
            out["handedness"] = self.handedness
        if self.target is not None:
            out["target"] = self.target
        if self.criteria is not None:
            out["criteria"] = self.criteria
        if self.entity is not None:
            out["entity"] = self.entity
        return out


@dataclass(frozen=True)
class ExpressionSignalSpec:
    name: str
    expression: str
    tree: object = field(compare=False, default=None)

    def to_json(self) -> dict:
        return {"name": self.name, "expression": self.expression}


SignalSpec = SourceSignalSpec | ExpressionSignalSpec


def parse_signal_spec(obj: dict, loc: str) -> SignalSpec:
    if not isinstance(obj, dict):
        raise SchemaError("signal must be an object", loc)
    if "name" not in obj or not isinstance(obj["name"], str) or not obj["name"]:
        raise SchemaError("signal needs a non-empty name", loc)
    name = obj["name"]

    if "expression" in obj:
        unknown = set(obj) - {"name", "expression"}
        if unknown:
            raise SchemaError(f"unknown keys {sorted(unknown)} on expression signal", loc)
        tree = expr.parse_expression(str(obj["expression"]))
        return ExpressionSignalSpec(name, str(obj["expression"]), tree)

    unknown = set(obj) - {"name", "source", "handedness", "target", "criteria", "value", "entity"}
    if unknown:
        raise SchemaError(f"unknown keys {sorted(unknown)} on source signal", loc)
    source = obj.get("source")
    if source not in SOURCES:
        raise SchemaError(f"source must be one of {SOURCES}, got {source!r}", loc)
    handedness = obj.get("handedness")
    if handedness is not None:
        if source != "hand":
            raise SchemaError("handedness only applies to hand sources", loc)
        if handedness not in HANDEDNESS:
            raise SchemaError(f"handedness must be one of {HANDEDNESS}", loc)
    elif source == "hand":
        handedness = "any"
    target = obj.get("target")
    criteria = obj.get("criteria")
    if target is not None and target not in TARGETS:
        raise SchemaError(f"target must be one of {TARGETS}, got {target!r}", loc)
    if criteria is not None and criteria not in CRITERIA:
        raise SchemaError(f"unsupported criteria {criteria!r} (known: {CRITERIA})", loc)
    if target in TARGETS_NEEDING_CRITERIA and criteria is None:
        raise SchemaError(f"criteria required for target {target!r}", loc)
    if criteria is not None and target not in TARGETS_NEEDING_CRITERIA:
        raise SchemaError("criteria only applies to vis-part or environment targets", loc)
    value = obj.get("value")
    if value not in VALUES:
        raise SchemaError(f"value must be one of {VALUES}, got {value!r}", loc)
    allowed = DEICTIC_VALUES if target is not None else NON_DEICTIC_VALUES
    if value not in allowed:
        kind = "deictic" if target is not None else "non-deictic"
        raise SchemaError(f"value {value!r} not valid for a {kind} signal", loc)
    if value in ("select", "pinch") and source != "hand":
        raise SchemaError(f"value {value!r} requires a hand source", loc)
    if value == "uivalue" and source != "ui":
        raise SchemaError("uivalue requires a ui source", loc)
    entity = obj.get("entity")
    if entity is not None and source not in ("ui", "object"):
        raise SchemaError("entity binding only applies to ui and object sources", loc)
    return SourceSignalSpec(name, source, handedness, target, criteria, value, entity)


def static_value_type(spec: SignalSpec, types: dict[str, str]) -> str:
    """Best-effort result tag for lint; expression signals consult the types
    of the signals they reference."""
    if isinstance(spec, ExpressionSignalSpec):
        return expr.static_type(spec.tree, types)
    if spec.value in ("select", "pinch", "boolean"):
        return expr.BOOLEAN
    if spec.value in ("position", "scale", "intersection"):
        return expr.VEC3
    if spec.value == "rotation":
        return expr.ROTATION
    if spec.value in ("distance", "angle"):
        return expr.NUMBER
    return expr.UNKNOWN  # uivalue: number, boolean, or text


# ---------------------------------------------------------------------------
# Dependency graph


class SignalGraph:
    """Signals in dependency order; built once per morph, reused per instance."""

    def __init__(self, specs: list[SignalSpec]):
        by_name = {}
        for s in specs:
            if s.name in by_name:
                raise SemanticError(f"duplicate signal name {s.name!r}")
            by_name[s.name] = s
        deps: dict[str, set[str]] = {}
        for s in specs:
            if isinstance(s, ExpressionSignalSpec):
                refs = set()
                for var in expr.variables(s.tree):
                    base = var.split(".", 1)[0]
                    if base in by_name:
                        refs.add(base)
                    elif var in by_name:
                        refs.add(var)
                    else:
                        raise SemanticError(
                            f"signal {s.name!r} references undeclared name {var!r}"
                        )
                deps[s.name] = refs
            else:
                deps[s.name] = set()
        self.specs = {s.name: s for s in specs}
        self.order = self._toposort(deps)

    @staticmethod
    def _toposort(deps: dict[str, set[str]]) -> list[str]:
        order: list[str] = []
        state: dict[str, int] = {}  # 0 visiting, 1 done

        def visit(name: str, stack: tuple):
            if state.get(name) == 1:
                return
            if state.get(name) == 0:
                cycle = " -> ".join(stack + (name,))
                raise CycleError(f"signal dependency cycle: {cycle}")
            state[name] = 0
            for d in sorted(deps[name]):
                visit(d, stack + (name,))
            state[name] = 1
            order.append(name)

        for name in deps:
            visit(name, ())
        return order

    def names(self) -> list[str]:
        return list(self.specs)

    def static_types(self) -> dict[str, str]:
        types: dict[str, str] = {}
        for name in self.order:
            types[name] = static_value_type(self.specs[name], types)
        return types


# ---------------------------------------------------------------------------
# Sampling


class SignalFault(Exception):
    """Internal: a sample or evaluation could not produce a value."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def _source_entity(snapshot: SceneSnapshot, spec: SourceSignalSpec, bound_vis: str | None):
    if spec.source == "hand":
        side = spec.handedness or "any"
        if side in ("left", "right"):
            ent = snapshot.first_of_kind(f"hand-{side}")
            if ent is None:
                raise SignalFault(f"no {side} hand in scene")
            return [ent]
        hands = [
            h
            for h in (snapshot.first_of_kind("hand-left"), snapshot.first_of_kind("hand-right"))
            if h is not None
        ]
        if not hands:
            raise SignalFault("no hands in scene")
        return hands
    if spec.source == "head":
        ent = snapshot.first_of_kind("head")
        if ent is None:
            raise SignalFault("no head in scene")
        return [ent]
    if spec.source == "vis":
        ent = snapshot.get(bound_vis) if bound_vis else None
        if ent is None:
            raise SignalFault("signal has no bound visualisation")
        return [ent]
    if spec.source in ("ui", "object"):
        kind = "ui-widget" if spec.source == "ui" else "object"
        if spec.entity is not None:
            ent = snapshot.get(spec.entity)
            if ent is None or ent.kind != kind:
                raise SignalFault(f"no {kind} entity {spec.entity!r}")
            return [ent]
        ent = snapshot.first_of_kind(kind)
        if ent is None:
            raise SignalFault(f"no {kind} in scene")
        return [ent]
    raise SignalFault(f"unknown source {spec.source!r}")


def _own_value(entity, value: str):
    if value == "position":
        return entity.position
    if value == "rotation":
        return entity.rotation
    if value == "scale":
        return entity.extent.scale(2.0)
    if value in ("select", "pinch"):
        return bool(entity.pinch)
    if value == "uivalue":
        if entity.value is None:
            raise SignalFault(f"ui widget {entity.id!r} has no value")
        return entity.value
    raise SignalFault(f"cannot derive {value!r} from {entity.kind}")


def _deictic_value(
    snapshot: SceneSnapshot, res: GeoResolution, value: str
):
    if value == "boolean":
        return res.resolved
    if not res.resolved:
        raise SignalFault("no target resolved")
    if value == "position":
        return res.center
    if value == "distance":
        return res.distance
    if value == "intersection":
        if res.point is None:
            raise SignalFault("target has no intersection point")
        return res.point
    if value == "angle":
        if res.angle is None:
            raise SignalFault("target has no contact angle")
        return res.angle
    target = snapshot.get(res.target_id) if res.target_id else None
    if target is None:
        raise SignalFault("target entity vanished")
    if value == "rotation":
        return target.rotation
    if value == "scale":
        return target.extent.scale(2.0)
    raise SignalFault(f"cannot derive {value!r} from a target")


def sample_source(
    snapshot: SceneSnapshot,
    spec: SourceSignalSpec,
    *,
    bound_vis: str | None = None,
    tolerance: float = 0.02,
):
    """Sample one source-based signal; raises SignalFault when unresolvable.

    Unresolved deictic targets yield False for boolean derivations rather
    than faulting, so presence checks are always well-defined.
    """
    sources = _source_entity(snapshot, spec, bound_vis)
    if not spec.deictic:
        if len(sources) == 2 and spec.value in ("select", "pinch"):
            return sources[0].pinch or sources[1].pinch
        return _own_value(sources[0], spec.value)

    # deictic: with handedness any, use whichever hand resolves (left first)
    last = GeoResolution()
    for src in sources:
        res = query_geometry(
            snapshot, src.id, spec.target, spec.criteria, bound_vis=bound_vis, tolerance=tolerance
        )
        if res.resolved:
            return _deictic_value(snapshot, res, spec.value)
        last = res
    return _deictic_value(snapshot, last, spec.value)


def default_value(spec: SignalSpec, types: dict[str, str]):
    """Value a signal holds before its first good sample."""
    t = static_value_type(spec, types)
    if t == expr.BOOLEAN:
        return False
    if t == expr.VEC3:
        return Vec3()
    if t == expr.ROTATION:
        return Rotation.identity()
    if t == expr.TEXT:
        return ""
    return 0.0


class SignalRuntime:
    """Per-instance propagation state: last good values plus fault flags.

    propagate() samples every source once against one snapshot, then
    evaluates expressions in dependency order, so each tick sees one
    coherent set of samples.
    """

    def __init__(self, graph: SignalGraph):
        self.graph = graph
        types = graph.static_types()
        self.values = {name: default_value(graph.specs[name], types) for name in graph.order}
        self.faulted: dict[str, str | None] = {name: None for name in graph.order}

    def propagate(
        self,
        snapshot: SceneSnapshot,
        *,
        bound_vis: str | None = None,
        tolerance: float = 0.02,
    ) -> tuple[dict, list[tuple[str, str]]]:
        """Returns (value snapshot, newly raised faults as (name, reason))."""
        new_faults: list[tuple[str, str]] = []
        for name in self.graph.order:
            spec = self.graph.specs[name]
            try:
                if isinstance(spec, SourceSignalSpec):
                    value = sample_source(
                        snapshot, spec, bound_vis=bound_vis, tolerance=tolerance
                    )
                else:
                    value = expr.eval_expression(spec.tree, self.values)
                self.values[name] = value
                self.faulted[name] = None
            except (SignalFault, EvalError) as e:
                reason = e.reason if isinstance(e, SignalFault) else str(e)
                if self.faulted[name] != reason:
                    new_faults.append((name, reason))
                self.faulted[name] = reason
        return dict(self.values), new_faults


def value_to_json(v):
    if isinstance(v, Vec3):
        return v.to_list()
    if isinstance(v, Rotation):
        return {"quat": v.to_list()}
    return v
