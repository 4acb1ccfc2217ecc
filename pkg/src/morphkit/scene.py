"""Simulated stand-in for the immersive environment.

Entities (hands, head, surfaces, tracked objects, UI widgets, and
visualisations) live in a flat registry keyed by id. Mutation happens only
through commands; every entity is a frozen value, so a snapshot is just the
current tuple of entities and stays valid forever.

Scripted input arrives as a scenario trace: a JSONL file of (tick, command)
steps with non-decreasing ticks. The same command vocabulary is used by the
live playground service.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from functools import lru_cache

from .errors import OrderError, ParseError, SchemaError, UnknownEntityError
from .vecmath import Rotation, Vec3, rotation_from_json, rotation_to_json
from .visdoc import MarkLayout, Pose, VisSpec, compute_layout

KINDS = ("hand-left", "hand-right", "head", "surface", "object", "ui-widget", "vis")

SCHEMA_VERSION = 1


@lru_cache(maxsize=256)
def cached_layout(spec: VisSpec) -> MarkLayout:
    return compute_layout(spec)


@dataclass(frozen=True)
class SceneEntity:
    id: str
    kind: str
    pose: Pose = field(default_factory=Pose)
    extent: Vec3 = field(default_factory=lambda: Vec3(0.05, 0.05, 0.05))
    pinch: bool = False
    grab: bool = False
    value: object = None  # ui-widget payload: number | boolean | text
    spec: VisSpec | None = None  # vis entities only

    @property
    def position(self) -> Vec3:
        return self.pose.position

    @property
    def rotation(self) -> Rotation:
        return self.pose.rotation

    def surface_normal(self) -> Vec3:
        return self.rotation.up()

    def to_json(self) -> dict:
        out = {
            "id": self.id,
            "kind": self.kind,
            "position": self.position.to_list(),
            "rotation": rotation_to_json(self.rotation),
            "extent": self.extent.to_list(),
        }
        if self.kind in ("hand-left", "hand-right"):
            out["pinch"] = self.pinch
            out["grab"] = self.grab
        if self.kind == "ui-widget":
            out["value"] = self.value
        if self.kind == "vis" and self.spec is not None:
            out["spec"] = self.spec.to_tree()
        return out


def entity_from_json(obj: dict, base_dir: str | None = None) -> SceneEntity:
    if not isinstance(obj, dict) or "id" not in obj or "kind" not in obj:
        raise SchemaError("entity needs id and kind")
    kind = obj["kind"]
    if kind not in KINDS:
        raise SchemaError(f"unknown entity kind {kind!r}", f"/{obj['id']}")
    pos = Vec3.from_list(obj.get("position", [0, 0, 0]))
    rot = rotation_from_json(obj["rotation"]) if "rotation" in obj else Rotation.identity()
    spec = None
    extent = None
    if kind == "vis":
        if "spec" in obj:
            spec = VisSpec(obj["spec"])
        elif "spec_path" in obj:
            path = os.path.join(base_dir or ".", obj["spec_path"])
            with open(path, encoding="utf-8") as f:
                spec = VisSpec(json.load(f))
        else:
            raise SchemaError("vis entity needs a spec or spec_path", f"/{obj['id']}")
        extent = Vec3(
            spec.view_prop("width") / 2, spec.view_prop("height") / 2, spec.view_prop("depth") / 2
        )
    if "extent" in obj:
        extent = Vec3.from_list(obj["extent"])
    if extent is None:
        extent = Vec3(0.05, 0.05, 0.05)
    return SceneEntity(
        id=str(obj["id"]),
        kind=kind,
        pose=Pose(pos, rot),
        extent=extent,
        pinch=bool(obj.get("pinch", False)),
        grab=bool(obj.get("grab", False)),
        value=obj.get("value"),
        spec=spec,
    )


# ---------------------------------------------------------------------------
# Scene and snapshots


class SceneSnapshot:
    """Immutable view of the scene at one tick."""

    def __init__(self, entities: tuple[SceneEntity, ...]):
        self.entities = entities
        self._by_id = {e.id: e for e in entities}

    def get(self, entity_id: str) -> SceneEntity | None:
        return self._by_id.get(entity_id)

    def of_kind(self, *kinds: str) -> list[SceneEntity]:
        return [e for e in self.entities if e.kind in kinds]

    def first_of_kind(self, kind: str) -> SceneEntity | None:
        found = self.of_kind(kind)
        return min(found, key=lambda e: e.id) if found else None


class Scene:
    """Mutable registry; all edits go through apply_command or the setters."""

    def __init__(self, entities: list[SceneEntity] | None = None):
        self._entities: dict[str, SceneEntity] = {}
        for e in entities or []:
            self.spawn(e)

    def snapshot(self) -> SceneSnapshot:
        return SceneSnapshot(tuple(self._entities.values()))

    def get(self, entity_id: str) -> SceneEntity:
        try:
            return self._entities[entity_id]
        except KeyError:
            raise UnknownEntityError(f"no entity {entity_id!r}") from None

    def spawn(self, entity: SceneEntity) -> None:
        if entity.id in self._entities:
            raise SchemaError(f"duplicate entity id {entity.id!r}")
        self._entities[entity.id] = entity

    def despawn(self, entity_id: str) -> SceneEntity:
        return self._entities.pop(self.get(entity_id).id)

    def _update(self, entity_id: str, **changes) -> SceneEntity:
        updated = replace(self.get(entity_id), **changes)
        self._entities[entity_id] = updated
        return updated

    def apply_command(self, cmd: dict) -> SceneEntity | None:
        """Apply one scenario command; returns the affected entity (None for
        despawn). Raises UnknownEntityError / SchemaError on bad input."""
        kind = cmd.get("kind")
        if kind == "set-pose":
            ent = self.get(cmd["id"])
            pos = Vec3.from_list(cmd["position"]) if "position" in cmd else ent.position
            rot = rotation_from_json(cmd["rotation"]) if "rotation" in cmd else ent.rotation
            return self._update(ent.id, pose=Pose(pos, rot))
        if kind == "set-gesture":
            ent = self.get(cmd["id"])
            changes = {}
            if "pinch" in cmd:
                changes["pinch"] = bool(cmd["pinch"])
            if "grab" in cmd:
                changes["grab"] = bool(cmd["grab"])
            return self._update(ent.id, **changes)
        if kind == "set-ui-value":
            ent = self.get(cmd["id"])
            if ent.kind != "ui-widget":
                raise SchemaError(f"set-ui-value targets ui-widget, got {ent.kind}")
            return self._update(ent.id, value=cmd.get("value"))
        if kind == "edit-vis-spec":
            ent = self.get(cmd["id"])
            if ent.kind != "vis":
                raise SchemaError(f"edit-vis-spec targets vis, got {ent.kind}")
            return self._update(ent.id, spec=VisSpec(cmd["spec"]))
        if kind == "spawn":
            ent = entity_from_json(cmd["entity"])
            self.spawn(ent)
            return ent
        if kind == "despawn":
            self.despawn(cmd["id"])
            return None
        raise SchemaError(f"unknown command kind {kind!r}")


def load_scene(text: str, base_dir: str | None = None) -> Scene:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed scene JSON: {e.msg}", column=e.colno) from e
    if obj.get("v", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise SchemaError(f"unsupported scene version {obj.get('v')!r}")
    return Scene([entity_from_json(e, base_dir) for e in obj.get("entities", [])])


# ---------------------------------------------------------------------------
# Scenario traces


@dataclass(frozen=True)
class TraceStep:
    tick: int
    command: dict


@dataclass(frozen=True)
class ScenarioTrace:
    steps: tuple[TraceStep, ...]

    def commands_at(self, tick: int) -> list[dict]:
        return [s.command for s in self.steps if s.tick == tick]

    def max_tick(self) -> int:
        return self.steps[-1].tick if self.steps else 0


def load_trace(text: str) -> ScenarioTrace:
    """Parse scenario JSONL; each line {"v":1, "tick":n, "cmd":{...}}."""
    steps: list[TraceStep] = []
    last = -1
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"line {lineno}: {e.msg}") from e
        if obj.get("v", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise SchemaError(f"line {lineno}: unsupported trace version {obj.get('v')!r}")
        if "tick" not in obj or "cmd" not in obj:
            raise SchemaError(f"line {lineno}: trace steps need tick and cmd")
        tick = int(obj["tick"])
        if tick < last:
            raise OrderError(f"line {lineno}: tick {tick} decreases from {last}")
        last = tick
        steps.append(TraceStep(tick, obj["cmd"]))
    return ScenarioTrace(tuple(steps))


def dump_trace(trace: ScenarioTrace) -> str:
    lines = [
        json.dumps({"v": SCHEMA_VERSION, "tick": s.tick, "cmd": s.command}, sort_keys=True)
        for s in trace.steps
    ]
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# Geometry


@dataclass(frozen=True)
class GeoResolution:
    """Result of a geometric query; empty when nothing was resolved.

    center is the resolved target's center (a mark center for mark targets);
    point is the derived contact point (plane projection for surfaces,
    otherwise the center).
    """

    target_id: str | None = None
    mark_index: int | None = None
    center: Vec3 | None = None
    point: Vec3 | None = None
    distance: float | None = None
    angle: float | None = None

    @property
    def resolved(self) -> bool:
        return self.target_id is not None


def _conjugate(r: Rotation) -> Rotation:
    return Rotation(r.w, -r.x, -r.y, -r.z)


def _to_local(point: Vec3, pose: Pose) -> Vec3:
    return _conjugate(pose.rotation).rotate(point - pose.position)


def point_in_box(point: Vec3, pose: Pose, extent: Vec3, tol: float) -> bool:
    local = _to_local(point, pose)
    return (
        abs(local.x) <= extent.x + tol
        and abs(local.y) <= extent.y + tol
        and abs(local.z) <= extent.z + tol
    )


def box_corners(pose: Pose, extent: Vec3) -> list[Vec3]:
    out = []
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                out.append(
                    pose.position
                    + pose.rotation.rotate(Vec3(sx * extent.x, sy * extent.y, sz * extent.z))
                )
    return out


def plane_signed_distance(point: Vec3, surface: SceneEntity) -> float:
    return (point - surface.position).dot(surface.surface_normal())


def project_on_plane(point: Vec3, surface: SceneEntity) -> Vec3:
    return point - surface.surface_normal().scale(plane_signed_distance(point, surface))


def box_touches_surface(pose: Pose, extent: Vec3, surface: SceneEntity, tol: float) -> bool:
    """Box-against-plane contact, clipped to the surface's extent.

    The box touches when its corners straddle the plane or sit within
    tolerance of it, and the projected contact point falls inside the
    surface rectangle (surfaces are finite for touch, infinite for angle
    and intersection derivations).
    """
    dists = [plane_signed_distance(c, surface) for c in box_corners(pose, extent)]
    if min(dists) > tol or max(dists) < -tol:
        return False
    contact = project_on_plane(pose.position, surface)
    local = _to_local(contact, surface.pose)
    return abs(local.x) <= surface.extent.x + tol and abs(local.z) <= surface.extent.z + tol


def surface_contact_angle(pose: Pose, surface: SceneEntity) -> float:
    """Angle between the box's local up axis and the surface normal, folded
    into [0, 90] degrees."""
    from .vecmath import angle_between_deg

    raw = angle_between_deg(pose.rotation.up(), surface.surface_normal())
    return min(raw, 180.0 - raw)


def vis_marks_world(vis: SceneEntity) -> list[tuple[int, Vec3, Vec3]]:
    """(row index, world center, half-size) for each mark of a vis entity.

    Layout positions live in the [0,w]x[0,h]x[0,d] box; the entity pose sits
    at the box center, so marks are offset by the half-extents.
    """
    layout = cached_layout(vis.spec)
    half = Vec3(layout.extent.x / 2, layout.extent.y / 2, layout.extent.z / 2)
    out = []
    for i, mark in enumerate(layout.marks):
        local = mark.position - half
        world = vis.position + vis.rotation.rotate(local)
        out.append((i, world, Vec3(mark.size.x / 2, mark.size.y / 2, mark.size.z / 2)))
    return out


def axis_segments(vis: SceneEntity) -> list[tuple[str, Pose, Vec3]]:
    """Thin boxes standing in for the x/y/z axis lines of a vis (experimental)."""
    layout = cached_layout(vis.spec)
    w, h, d = layout.extent.x, layout.extent.y, layout.extent.z
    half = Vec3(w / 2, h / 2, d / 2)
    thin = 0.01
    segs = [
        ("x", Vec3(w / 2, 0, 0), Vec3(w / 2, thin, thin)),
        ("y", Vec3(0, h / 2, 0), Vec3(thin, h / 2, thin)),
        ("z", Vec3(0, 0, d / 2), Vec3(thin, thin, d / 2)),
    ]
    out = []
    for name, center_local, ext in segs:
        world = vis.position + vis.rotation.rotate(center_local - half)
        out.append((name, Pose(world, vis.rotation), ext))
    return out


def query_geometry(
    snapshot: SceneSnapshot,
    source_id: str,
    target_kind: str,
    criteria: str | None,
    *,
    bound_vis: str | None = None,
    tolerance: float = 0.02,
) -> GeoResolution:
    """Resolve a deictic target for a source entity and derive its geometry.

    bound_vis names the visualisation a morph instance is attached to: mark
    and axis targets resolve against it, and a vis source targeting "vis"
    skips itself.
    """
    source = snapshot.get(source_id)
    if source is None:
        return GeoResolution()

    if target_kind == "head":
        head = snapshot.first_of_kind("head")
        if head is None:
            return GeoResolution()
        return _derive(source, head.id, head.position, head)

    if target_kind == "mark":
        vis = snapshot.get(bound_vis) if bound_vis else None
        if vis is None or vis.spec is None:
            return GeoResolution()
        marks = vis_marks_world(vis)
        if not marks:
            return GeoResolution()
        if criteria == "nearest":
            idx, center, _ = min(marks, key=lambda m: ((m[1] - source.position).length(), m[0]))
            return _derive(source, vis.id, center, vis, mark_index=idx)
        for idx, center, half in marks:
            if point_in_box(source.position, Pose(center, vis.rotation), half, tolerance):
                if criteria == "select" and not source.pinch:
                    continue
                return _derive(source, vis.id, center, vis, mark_index=idx)
        return GeoResolution()

    if target_kind == "axis":
        vis = snapshot.get(bound_vis) if bound_vis else None
        if vis is None or vis.spec is None:
            return GeoResolution()
        for name, pose, ext in axis_segments(vis):
            if point_in_box(source.position, pose, ext, tolerance):
                if criteria == "select" and not source.pinch:
                    continue
                return _derive(source, f"{vis.id}/axis-{name}", pose.position, vis)
        return GeoResolution()

    if target_kind == "surface":
        candidates = snapshot.of_kind("surface")
    elif target_kind == "object":
        candidates = snapshot.of_kind("object")
    elif target_kind == "vis":
        if source.kind == "vis":
            candidates = [e for e in snapshot.of_kind("vis") if e.id != source.id]
        elif bound_vis is not None and snapshot.get(bound_vis) is not None:
            candidates = [snapshot.get(bound_vis)]
        else:
            candidates = snapshot.of_kind("vis")
    else:
        return GeoResolution()

    if not candidates:
        return GeoResolution()

    if criteria == "nearest":
        target = min(candidates, key=lambda e: ((e.position - source.position).length(), e.id))
        return _derive(source, target.id, target.position, target)

    # touch / select scan candidates in id order for determinism
    for target in sorted(candidates, key=lambda e: e.id):
        if target.kind == "surface":
            hit = box_touches_surface(source.pose, source.extent, target, tolerance)
        else:
            hit = point_in_box(source.position, target.pose, target.extent, tolerance)
        if not hit:
            continue
        if criteria == "select" and not source.pinch:
            continue
        return _derive(source, target.id, target.position, target)
    return GeoResolution()


def _derive(
    source: SceneEntity,
    target_id: str,
    target_center: Vec3,
    target: SceneEntity,
    mark_index: int | None = None,
) -> GeoResolution:
    point = target_center
    angle = None
    if target.kind == "surface":
        point = project_on_plane(source.position, target)
        angle = surface_contact_angle(source.pose, target)
    return GeoResolution(
        target_id=target_id,
        mark_index=mark_index,
        center=target_center,
        point=point,
        distance=(target_center - source.position).length(),
        angle=angle,
    )
