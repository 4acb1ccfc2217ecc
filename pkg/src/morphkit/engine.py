"""The morph runtime.

One Engine owns a scene plus a set of loaded morphs and advances them with
explicit fixed timesteps; there is no wall-clock anywhere, so a run is a
pure function of (scene, morphs, command stream, seed) and event logs are
reproducible byte-for-byte.

Per tick the engine: snapshots the scene, propagates every instance's
signals, evaluates triggers, resolves activation conflicts by priority
(seeded RNG on ties), creates and resolves keyframes for the winners,
advances tweens, publishes interpolated states, and finally applies
completion/interruption semantics and disposes the finished transitions'
subscriptions.

A visualisation enters a morph's machine when it matches a non-restricted
state, and exits (store purged) only when its spec is edited externally;
spec changes caused by transitions just re-run matching so the vis can
become eligible for further morphs.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass

from . import expr
from .config import EngineConfig
from .easing import EASING
from .errors import EvalError, MergeError, ResolveError
from .keyframes import (
    Keyframe,
    KeyframeStore,
    create_final,
    create_initial,
    resolve_placeholders,
    touched_paths,
)
from .matcher import eligible_entries
from .morphspec import MorphSpec, TransitionSpec
from .scene import Scene, cached_layout
from .signals import SignalGraph, SignalRuntime, value_to_json
from .visdoc import ABSENT, VisSpec, iter_leaf_paths, lerp_layout, tree_get, tree_write

FORWARD, REVERSE = "forward", "reverse"


# ---------------------------------------------------------------------------
# Events


@dataclass(frozen=True)
class EngineEvent:
    tick: int
    kind: str
    vis: str
    morph: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "tick": self.tick,
                "kind": self.kind,
                "vis": self.vis,
                "morph": self.morph,
                **{k: v for k, v in sorted(self.payload.items())},
            },
            sort_keys=True,
            separators=(",", ":"),
        )


# ---------------------------------------------------------------------------
# Tweening


@dataclass(frozen=True)
class TweenState:
    """Progress of one transition at one tick.

    raw_t is travel progress in [0,1]; eased_t = easing(raw_t); staging maps
    dotted property paths to windows applied on top of the eased value.
    """

    raw_t: float
    eased_t: float
    staging: dict
    snap_threshold: float = 0.5

    def local(self, path_text: str) -> float:
        window = self._window(path_text)
        if window is None:
            return self.eased_t
        a, b = window
        return min(1.0, max(0.0, (self.eased_t - a) / (b - a)))

    def _window(self, path_text: str):
        best = None
        for key, window in self.staging.items():
            if path_text == key or path_text.startswith(key + "."):
                if best is None or len(key) > len(best[0]):
                    best = (key, window)
        return best[1] if best else None


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def spec_diff(a: VisSpec, b: VisSpec) -> list:
    """Leaf-level differences (path, from, to); ABSENT marks additions and
    removals. The data block never differs within a transition."""
    ta, tb = a.to_tree(), b.to_tree()
    leaves_a = {p: v for p, v in iter_leaf_paths(ta) if p[0] != "data"}
    leaves_b = {p: v for p, v in iter_leaf_paths(tb) if p[0] != "data"}
    out = []
    for path in sorted(set(leaves_a) | set(leaves_b)):
        va = leaves_a.get(path, ABSENT)
        vb = leaves_b.get(path, ABSENT)
        if va != vb or (va is ABSENT) != (vb is ABSENT):
            out.append((path, va, vb))
    return out


def apply_tween(kf_from: Keyframe, kf_to: Keyframe, tween: TweenState):
    """Interpolated (spec tree, layout) between two resolved keyframes.

    Numeric spec properties lerp at their staged-local eased t; discrete
    ones (field names, types, additions, removals) snap once the local t
    crosses the snap threshold. Mark geometry lerps componentwise: each
    position axis follows its channel's staging window, color follows the
    color channel's.
    """
    tree = kf_from.spec.to_tree()
    for path, va, vb in spec_diff(kf_from.spec, kf_to.spec):
        t = tween.local(".".join(path))
        if va is not ABSENT and vb is not ABSENT and _is_num(va) and _is_num(vb):
            tree = tree_write(tree, path, va + (vb - va) * t)
        elif t >= tween.snap_threshold:
            tree = tree_write(tree, path, vb if vb is not ABSENT else ABSENT)
    ts = {
        "x": tween.local("encoding.x"),
        "y": tween.local("encoding.y"),
        "z": tween.local("encoding.z"),
        "color": tween.local("encoding.color"),
    }
    layout = lerp_layout(kf_from.layout, kf_to.layout, ts, tween.local("encoding.facetwrap"))
    return tree, layout


# ---------------------------------------------------------------------------
# Instances


@dataclass
class Subscription:
    transition: TransitionSpec
    direction: str
    generation: int
    eval_count: int = 0


@dataclass
class ActiveTransition:
    transition: TransitionSpec
    direction: str
    start_node: str
    end_node: str
    kf_from: Keyframe
    kf_to: Keyframe
    write_paths: set
    staging: dict
    signal_timed: bool
    t: float = 0.0
    subscription: Subscription | None = None

    def easing_fn(self):
        return EASING[self.transition.control.easing]


class MorphInstance:
    """Live binding of one morph to one visualisation."""

    def __init__(self, morph: MorphSpec, vis_id: str, node: str, graph: SignalGraph):
        self.morph = morph
        self.vis_id = vis_id
        self.node = node
        self.runtime = SignalRuntime(graph)
        self.subscriptions: list[Subscription] = []
        self.active: ActiveTransition | None = None
        self.grab_disabled = False
        self.env: dict = {}
        self._generation = 0

    @property
    def key(self) -> tuple:
        return (self.vis_id, self.morph.name)

    @property
    def phase(self) -> str:
        return "transitioning" if self.active else "idle"

    def next_generation(self) -> int:
        self._generation += 1
        return self._generation

    def make_subscriptions(self) -> list[Subscription]:
        subs = []
        for t in self.morph.transitions:
            if t.initial == self.node:
                subs.append(Subscription(t, FORWARD, self.next_generation()))
            if t.bidirectional and t.final == self.node:
                subs.append(Subscription(t, REVERSE, self.next_generation()))
        return subs


@dataclass
class Activation:
    instance: MorphInstance
    subscription: Subscription
    write_paths: set

    @property
    def priority(self) -> int:
        return self.subscription.transition.priority


# ---------------------------------------------------------------------------
# Engine


class Engine:
    def __init__(
        self,
        scene: Scene,
        morphs: list[MorphSpec],
        config: EngineConfig | None = None,
        seed: int | None = None,
    ):
        self.scene = scene
        self.morphs = list(morphs)
        self.config = config or EngineConfig()
        self.rng = random.Random(self.config.seed if seed is None else seed)
        self.tick = 0
        self.instances: dict[tuple, MorphInstance] = {}
        self.store = KeyframeStore()
        self.vis_order: list[str] = []
        self.retired_subscriptions: list[tuple] = []  # (instance key, Subscription)
        self.on_keyframes = None  # optional hook: fn(tick, instance, active)
        self.last_signal_snapshots: dict[tuple, dict] = {}
        self._events: list[EngineEvent] = []
        self._graphs = {m.name: SignalGraph(list(m.signals)) for m in self.morphs}
        self._touched: dict[tuple, set] = {}
        for m in self.morphs:
            for t in m.transitions:
                s_i, s_f = m.state(t.initial), m.state(t.final)
                self._touched[(m.name, t.name, FORWARD)] = touched_paths(s_i, s_f)
                self._touched[(m.name, t.name, REVERSE)] = touched_paths(s_f, s_i)
        for e in scene.snapshot().entities:
            if e.kind == "vis":
                self._register_vis(e.id)

    # -- events ----------------------------------------------------------------
    def _emit(self, kind: str, vis: str, morph: str, **payload) -> None:
        self._events.append(EngineEvent(self.tick, kind, vis, morph, payload))

    def drain_events(self) -> list[EngineEvent]:
        out, self._events = self._events, []
        return out

    # -- machine entry/exit ------------------------------------------------------
    def _register_vis(self, vis_id: str) -> None:
        if vis_id not in self.vis_order:
            self.vis_order.append(vis_id)
        self._enter_machines(vis_id)

    def _enter_machines(self, vis_id: str) -> None:
        entity = self.scene.get(vis_id)
        for morph in self.morphs:
            key = (vis_id, morph.name)
            if key in self.instances:
                continue
            entries = eligible_entries(morph, entity.spec)
            if not entries:
                continue
            inst = MorphInstance(morph, vis_id, entries[0], self._graphs[morph.name])
            inst.subscriptions = inst.make_subscriptions()
            self.instances[key] = inst
            self._emit("machine-entered", vis_id, morph.name, state=entries[0], eligible=entries)

    def _exit_instance(self, inst: MorphInstance, reason: str) -> None:
        for sub in inst.subscriptions:
            self.retired_subscriptions.append((inst.key, sub))
        if inst.active and inst.active.subscription:
            self.retired_subscriptions.append((inst.key, inst.active.subscription))
        self.store.purge_instance(inst.key)
        del self.instances[inst.key]
        self._emit("machine-exited", inst.vis_id, inst.morph.name, reason=reason, node=inst.node)

    def on_vis_updated(self, vis_id: str, new_spec: VisSpec, cause: str) -> None:
        """cause="external": instances exit (stores purged) then re-matching
        runs fresh. cause="transition": re-matching only, existing instances
        stay where they are."""
        current = self.scene.get(vis_id)
        if current.spec is not new_spec:
            self.scene.apply_command(
                {"kind": "edit-vis-spec", "id": vis_id, "spec": new_spec.to_tree()}
            )
        if cause == "external":
            for inst in [i for i in self.instances.values() if i.vis_id == vis_id]:
                self._exit_instance(inst, "spec-edited")
        self._enter_machines(vis_id)

    # -- command routing -----------------------------------------------------------
    def apply_command(self, cmd: dict) -> None:
        kind = cmd.get("kind")
        if kind == "edit-vis-spec":
            self.scene.apply_command(cmd)
            self.on_vis_updated(cmd["id"], self.scene.get(cmd["id"]).spec, "external")
            return
        if kind == "set-pose" and cmd.get("grab"):
            target = self.scene.get(cmd["id"])
            if target.kind == "vis" and self._grab_disabled(cmd["id"]):
                return  # grab suppressed while a disablegrab transition runs
        if kind == "despawn":
            entity = self.scene.get(cmd["id"])
            if entity.kind == "vis":
                for inst in [i for i in self.instances.values() if i.vis_id == entity.id]:
                    self._exit_instance(inst, "despawned")
                self.vis_order = [v for v in self.vis_order if v != entity.id]
            self.scene.apply_command(cmd)
            return
        self.scene.apply_command(cmd)
        if kind == "spawn" and cmd.get("entity", {}).get("kind") == "vis":
            self._register_vis(cmd["entity"]["id"])

    def _grab_disabled(self, vis_id: str) -> bool:
        return any(
            i.grab_disabled for i in self.instances.values() if i.vis_id == vis_id and i.active
        )

    # -- stepping ------------------------------------------------------------------
    def _ordered_instances(self) -> list[MorphInstance]:
        morph_idx = {m.name: i for i, m in enumerate(self.morphs)}
        return sorted(
            self.instances.values(),
            key=lambda i: (self.vis_order.index(i.vis_id), morph_idx[i.morph.name]),
        )

    def step(self, dt: float | None = None) -> list[EngineEvent]:
        """Advance one tick; returns the events it produced."""
        dt = self.config.timestep if dt is None else dt
        snapshot = self.scene.snapshot()
        instances = self._ordered_instances()

        # 1. one coherent signal snapshot per instance
        self.last_signal_snapshots = {}
        for inst in instances:
            env, faults = inst.runtime.propagate(
                snapshot, bound_vis=inst.vis_id, tolerance=self.config.touch_tolerance
            )
            inst.env = env
            self.last_signal_snapshots[inst.key] = env
            for name, reason in faults:
                self._emit(
                    "signal-fault", inst.vis_id, inst.morph.name, signal=name, reason=reason
                )

        # 2. trigger evaluation on idle instances; every satisfied transition
        # competes, and the same-instance rule in conflict resolution keeps
        # each machine in at most one transition node
        requests: list[Activation] = []
        for inst in instances:
            if inst.active is not None:
                continue
            for sub in inst.subscriptions:
                if self._activation_ready(inst, sub):
                    requests.append(
                        Activation(
                            inst,
                            sub,
                            self._touched[(inst.morph.name, sub.transition.name, sub.direction)],
                        )
                    )

        # 3. conflicts: priority wins, seeded RNG on ties, disjoint writers pass
        allowed = self._resolve_conflicts(requests)

        # 4. keyframes for the winners
        for act in allowed:
            self._start_transition(act)

        # 5. tween advance + publication progress + completion bookkeeping
        for inst in instances:
            if inst.active is not None:
                self._advance_active(inst, dt)

        self.tick += 1
        return self.drain_events()

    # -- activation ------------------------------------------------------------------
    def _eval_trigger(self, inst: MorphInstance, sub: Subscription):
        """Evaluate a subscription's trigger; counts one evaluation. Returns
        the boolean value, or None when the transition has no trigger."""
        t = sub.transition
        if t.trigger_tree is None:
            return None
        sub.eval_count += 1
        try:
            value = expr.eval_expression(t.trigger_tree, inst.env)
        except EvalError as e:
            self._emit(
                "signal-fault",
                inst.vis_id,
                inst.morph.name,
                signal=f"trigger:{t.name}",
                reason=str(e),
            )
            return False
        if not isinstance(value, bool):
            self._emit(
                "signal-fault",
                inst.vis_id,
                inst.morph.name,
                signal=f"trigger:{t.name}",
                reason=f"trigger returned {type(value).__name__}, expected boolean",
            )
            return False
        return value

    def _signal_t(self, inst: MorphInstance, transition: TransitionSpec) -> float:
        value = inst.env.get(transition.control.timing, 0.0)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return 0.0
        return min(1.0, max(0.0, float(value)))

    def _activation_ready(self, inst: MorphInstance, sub: Subscription) -> bool:
        """Forward legs need the trigger true (or absent); reverse legs need
        it false (or, for signal-timed transitions, no trigger at all).
        Signal-timed legs additionally gate on the tween signal: strictly
        above 0 going forward, strictly below 1 in reverse, so a chain of
        signal-driven transitions rests exactly at its boundaries."""
        t = sub.transition
        value = self._eval_trigger(inst, sub)
        if sub.direction == FORWARD:
            if value is False:
                return False
        else:
            if value is True:
                return False
            if value is None and not t.control.timing_is_signal:
                return False  # an untriggered duration leg never auto-reverses
        if t.control.timing_is_signal:
            s = self._signal_t(inst, t)
            if sub.direction == FORWARD and s <= 0.0:
                return False
            if sub.direction == REVERSE and s >= 1.0:
                return False
        return True

    def _resolve_conflicts(self, requests: list[Activation]) -> list[Activation]:
        if not requests:
            return []
        occupied: dict[str, list[set]] = {}
        for inst in self.instances.values():
            if inst.active is not None:
                occupied.setdefault(inst.vis_id, []).append(inst.active.write_paths)
        by_vis: dict[str, list[Activation]] = {}
        for act in requests:
            by_vis.setdefault(act.instance.vis_id, []).append(act)

        allowed: list[Activation] = []
        for vis_id in self.vis_order:
            if vis_id not in by_vis:
                continue
            group = by_vis[vis_id]
            by_priority: dict[int, list[Activation]] = {}
            for act in group:
                by_priority.setdefault(act.priority, []).append(act)
            ordered: list[Activation] = []
            for priority in sorted(by_priority, reverse=True):
                bucket = by_priority[priority]
                if len(bucket) > 1:
                    self.rng.shuffle(bucket)
                ordered.extend(bucket)
            taken = list(occupied.get(vis_id, []))
            taken_instances = set()
            for act in ordered:
                conflict = act.instance.key in taken_instances or any(
                    _paths_overlap(act.write_paths, w) for w in taken
                )
                if conflict:
                    self._emit(
                        "conflict-blocked",
                        vis_id,
                        act.instance.morph.name,
                        transition=act.subscription.transition.name,
                        direction=act.subscription.direction,
                        priority=act.priority,
                    )
                else:
                    taken.append(act.write_paths)
                    taken_instances.add(act.instance.key)
                    allowed.append(act)
        return allowed

    def _start_transition(self, act: Activation) -> None:
        inst = act.instance
        t = act.subscription.transition
        direction = act.subscription.direction
        morph = inst.morph
        if direction == FORWARD:
            s_from, s_to = morph.state(t.initial), morph.state(t.final)
            start_node, end_node = t.initial, t.final
        else:
            s_from, s_to = morph.state(t.final), morph.state(t.initial)
            start_node, end_node = t.final, t.initial
        spec = self.scene.get(inst.vis_id).spec
        try:
            initial = create_initial(spec, s_from)
            stored = self.store.get(inst.key, s_to.name)
            draft = create_final(initial, s_from, s_to, stored)
            kf_from, kf_to = resolve_placeholders((initial, draft), inst.env)
        except (MergeError, ResolveError, EvalError) as e:
            self._emit(
                "signal-fault",
                inst.vis_id,
                morph.name,
                signal=f"keyframes:{t.name}",
                reason=str(e),
            )
            return

        staging = dict(t.control.staging)
        if direction == REVERSE and not t.control.timing_is_signal:
            staging = {k: (1.0 - b, 1.0 - a) for k, (a, b) in staging.items()}
        active = ActiveTransition(
            transition=t,
            direction=direction,
            start_node=start_node,
            end_node=end_node,
            kf_from=kf_from,
            kf_to=kf_to,
            write_paths=act.write_paths,
            staging=staging,
            signal_timed=t.control.timing_is_signal,
            t=0.0,
            subscription=act.subscription,
        )
        if active.signal_timed:
            active.t = self._signal_t(inst, t)
            if direction == REVERSE:
                # reverse legs of signal-timed transitions keep the absolute
                # t axis: keyframes stay in forward orientation
                active.kf_from, active.kf_to = kf_to, kf_from
                active.start_node, active.end_node = end_node, start_node
        # retire sibling subscriptions; the active one monitors interruption
        for sub in inst.subscriptions:
            if sub is not act.subscription:
                self.retired_subscriptions.append((inst.key, sub))
        inst.subscriptions = []
        inst.active = active
        inst.grab_disabled = t.disablegrab
        self._emit(
            "transition-started",
            inst.vis_id,
            morph.name,
            transition=t.name,
            direction=direction,
            properties=sorted(".".join(p) for p in act.write_paths),
        )
        if self.on_keyframes is not None:
            self.on_keyframes(self.tick, inst, active)

    # -- advancing ---------------------------------------------------------------------
    def _advance_active(self, inst: MorphInstance, dt: float) -> None:
        active = inst.active
        t_spec = active.transition

        # interruption monitoring: the leg's own trigger only, forward only
        if (
            active.direction == FORWARD
            and t_spec.trigger_tree is not None
            and active.subscription is not None
        ):
            value = self._eval_trigger(inst, active.subscription)
            if value is False and t_spec.control.interrupted != "ignore":
                self._interrupt(inst)
                return

        if active.signal_timed:
            active.t = self._signal_t(inst, t_spec)
        else:
            duration = float(t_spec.control.timing)
            active.t = 1.0 if duration <= 0.0 else min(1.0, active.t + dt / duration)

        eased = active.easing_fn()(active.t)
        self._emit(
            "tween-progress",
            inst.vis_id,
            inst.morph.name,
            transition=t_spec.name,
            direction=active.direction,
            t=active.t,
            eased=eased,
        )

        if active.signal_timed and active.t <= 0.0:
            # the tween signal slid back to the start boundary
            self._land(inst, "initial", completed=True)
        elif active.t >= 1.0:
            self._land(inst, t_spec.control.completed, completed=True)

    def _interrupt(self, inst: MorphInstance) -> None:
        mode = inst.active.transition.control.interrupted
        self._emit(
            "transition-interrupted",
            inst.vis_id,
            inst.morph.name,
            transition=inst.active.transition.name,
            direction=inst.active.direction,
            t=inst.active.t,
            landing=mode,
        )
        self._land(inst, mode, completed=False)

    def _land(self, inst: MorphInstance, landing: str, completed: bool) -> None:
        active = inst.active
        target_kf = active.kf_to if landing == "final" else active.kf_from
        target_node = active.end_node if landing == "final" else active.start_node

        if completed:
            self._emit(
                "transition-completed",
                inst.vis_id,
                inst.morph.name,
                transition=active.transition.name,
                direction=active.direction,
                landing=landing,
            )
            self.store.store(inst.key, active.kf_from)
            self.store.store(inst.key, active.kf_to)

        self.retired_subscriptions.append((inst.key, active.subscription))
        inst.active = None
        inst.grab_disabled = False
        inst.node = target_node
        inst.subscriptions = inst.make_subscriptions()

        current = self.scene.get(inst.vis_id).spec
        if target_kf.spec != current:
            self.on_vis_updated(inst.vis_id, target_kf.spec, "transition")

    # -- published state ------------------------------------------------------------
    def tween_state(self, active: ActiveTransition) -> TweenState:
        return TweenState(
            raw_t=active.t,
            eased_t=active.easing_fn()(active.t),
            staging=active.staging,
            snap_threshold=self.config.snap_threshold,
        )

    def vis_states(self) -> list[dict]:
        """Current per-vis published state: interpolated while transitioning,
        the registered spec otherwise."""
        out = []
        snapshot = self.scene.snapshot()
        for vis_id in self.vis_order:
            entity = snapshot.get(vis_id)
            if entity is None:
                continue
            actives = [
                i.active
                for i in self._ordered_instances()
                if i.vis_id == vis_id and i.active is not None
            ]
            if actives:
                tree, layout = apply_tween(
                    actives[0].kf_from, actives[0].kf_to, self.tween_state(actives[0])
                )
                for extra in actives[1:]:
                    extra_tree, _ = apply_tween(
                        extra.kf_from, extra.kf_to, self.tween_state(extra)
                    )
                    tree = _overlay(tree, extra_tree, extra.write_paths)
            else:
                spec = entity.spec
                tree, layout = spec.to_tree(), cached_layout(spec)
            out.append(
                {
                    "id": vis_id,
                    "spec": tree,
                    "layout": layout.to_json(),
                    "pose": entity.pose.to_json(),
                }
            )
        return out

    def machine_states(self) -> list[dict]:
        out = []
        for inst in self._ordered_instances():
            entry = {
                "morph": inst.morph.name,
                "vis": inst.vis_id,
                "node": inst.node,
                "phase": inst.phase,
                "signals": {k: value_to_json(v) for k, v in inst.env.items()},
            }
            if inst.active is not None:
                entry["transition"] = inst.active.transition.name
                entry["direction"] = inst.active.direction
                entry["t"] = inst.active.t
            out.append(entry)
        return out


def _paths_overlap(a: set, b: set) -> bool:
    for pa in a:
        for pb in b:
            n = min(len(pa), len(pb))
            if pa[:n] == pb[:n]:
                return True
    return False


def _overlay(base: dict, other: dict, paths: set) -> dict:
    for path in sorted(paths):
        value = tree_get(other, path)
        base = tree_write(base, path, value if value is not ABSENT else ABSENT)
    return base
