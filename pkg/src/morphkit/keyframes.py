"""Keyframe construction for activated transitions.

The initial keyframe is the live spec verbatim. The final keyframe starts
from the initial one and applies three rules against the two states'
partial specs: properties defined only in the initial state are removed,
properties defined only in the final state are added, and properties
defined in both are set to the final state's value. "Defined" is judged
path-by-path, so a state mentioning ``encoding.color.value`` claims that
leaf, while one mentioning ``encoding.color`` claims the channel.

Added or changed values prefer a previously stored keyframe for the target
state; that is what lets a reverse transition restore a property an earlier
transition removed. Placeholders (path accessors, signal names,
expressions) survive the merge as embedded markers and are substituted by
resolve_placeholders before the transition starts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from . import expr
from .errors import EvalError, MergeError, PreconditionError, ResolveError, SchemaError
from .matcher import match_state
from .morphspec import (
    Inequality,
    Literal,
    NullMarker,
    Placeholder,
    StateSpec,
    Wildcard,
    iter_partial_terms,
    partial_node_paths,
)
from .visdoc import ABSENT, MarkLayout, VisSpec, compute_layout, tree_get, tree_write


@dataclass(frozen=True)
class Keyframe:
    spec: VisSpec
    state_name: str
    layout: MarkLayout

    def dumps(self) -> str:
        return self.spec.dumps()


@dataclass
class KeyframeDraft:
    """A merged keyframe that may still contain Placeholder markers."""

    tree: dict
    state_name: str
    placeholders: list  # (path, Placeholder)

    def resolved(self) -> bool:
        return not self.placeholders


def keyframe_from_spec(spec: VisSpec, state_name: str) -> Keyframe:
    return Keyframe(spec, state_name, compute_layout(spec))


def create_initial(vis: VisSpec, state: StateSpec) -> Keyframe:
    """The pre-transition keyframe: the active spec itself, unchanged."""
    result = match_state(state, vis)
    if not result.matched:
        raise PreconditionError(
            f"visualisation does not match state {state.name!r}: {result.explain()}"
        )
    return keyframe_from_spec(vis, state.name)


def merge_rule_sets(s_i: StateSpec, s_f: StateSpec) -> tuple[set, set, set]:
    """The three disjoint path sets the merge touches: (removed, added,
    overwritten). Removals are maximal paths so a removed channel is one
    entry, not one per leaf."""
    nodes_i = partial_node_paths(s_i.partial)
    nodes_f = partial_node_paths(s_f.partial)
    gone = nodes_i - nodes_f
    removed = {p for p in gone if not any(p[:k] in gone for k in range(1, len(p)))}
    final_paths = {path for path, _ in iter_partial_terms(s_f.partial)}
    added = {p for p in final_paths if p not in nodes_i}
    overwritten = {p for p in final_paths if p in nodes_i}
    return removed, added, overwritten


def touched_paths(s_i: StateSpec, s_f: StateSpec) -> set:
    removed, added, overwritten = merge_rule_sets(s_i, s_f)
    return removed | added | overwritten


def create_final(
    initial: Keyframe,
    s_i: StateSpec,
    s_f: StateSpec,
    stored: Keyframe | None = None,
) -> KeyframeDraft:
    """Merge the final keyframe from the initial one; may return placeholders.

    stored is the keyframe previously recorded for the final state, when the
    morph has visited it before; its values win over the state's own terms
    for every added or changed property.
    """
    tree = initial.spec.to_tree()
    removed, _, _ = merge_rule_sets(s_i, s_f)
    for path in sorted(removed):
        tree = tree_write(tree, path, ABSENT)

    placeholders: list = []
    stored_tree = stored.spec.to_tree() if stored is not None else None
    for path, term in iter_partial_terms(s_f.partial):
        if isinstance(term, NullMarker):
            tree = tree_write(tree, path, ABSENT)
            continue
        if stored_tree is not None:
            kept = tree_get(stored_tree, path)
            if kept is not ABSENT:
                tree = tree_write(tree, path, kept)
                continue
        if isinstance(term, Literal):
            tree = tree_write(tree, path, term.value)
        elif isinstance(term, Placeholder):
            tree = tree_write(tree, path, term)
            placeholders.append((path, term))
        elif isinstance(term, (Wildcard, Inequality)) or term is None:
            if tree_get(tree, path) is ABSENT:
                raise MergeError(
                    f"no value available for {'.'.join(path)} "
                    "(wildcard with no live value and no stored keyframe)"
                )
        else:
            raise MergeError(f"unhandled term {term!r} at {'.'.join(path)}")

    _check_draft(tree)
    return KeyframeDraft(tree, s_f.name, placeholders)


def _check_draft(tree: dict) -> None:
    """Structural sanity for a merged tree, tolerant of embedded placeholders."""
    if "mark" not in tree:
        raise MergeError("merge removed the mark")
    for channel, spec in (tree.get("encoding") or {}).items():
        if isinstance(spec, Placeholder):
            continue
        if not isinstance(spec, dict):
            raise MergeError(f"channel {channel!r} merged to a non-record value")
        has_field, has_value = "field" in spec, "value" in spec
        if has_field == has_value:
            raise MergeError(
                f"channel {channel!r} must end with exactly one of field or value"
            )
        if has_field and "type" not in spec:
            raise MergeError(f"channel {channel!r} has a field but no type")


# ---------------------------------------------------------------------------
# Placeholder resolution


def _substitutable(value) -> bool:
    return isinstance(value, (int, float, str, bool))


def _read_accessor(ph: Placeholder, this_tree: dict, other_tree: dict):
    root, sub = ph.tree[0], tuple(ph.tree[1:])
    tree = this_tree if root == "this" else other_tree
    value = tree_get(tree, sub)
    if value is ABSENT:
        raise ResolveError(f"accessor {ph.text!r} hits an absent path")
    if _contains_placeholder(value):
        raise ResolveError(f"accessor {ph.text!r} reads an unresolved placeholder")
    return value


def _contains_placeholder(value) -> bool:
    if isinstance(value, Placeholder):
        return True
    if isinstance(value, dict):
        return any(_contains_placeholder(v) for v in value.values())
    return False


def _resolve_draft(draft: KeyframeDraft, other_tree: dict, signal_snapshot: dict) -> dict:
    tree = draft.tree
    expressions: list = []
    for path, ph in draft.placeholders:
        if ph.kind == "accessor":
            value = _read_accessor(ph, draft.tree, other_tree)
            tree = tree_write(tree, path, value)
        elif ph.kind == "signal":
            if ph.text not in signal_snapshot:
                raise ResolveError(f"placeholder names undeclared signal {ph.text!r}")
            value = signal_snapshot[ph.text]
            if not _substitutable(value):
                raise ResolveError(
                    f"signal {ph.text!r} holds a {type(value).__name__}; only numbers, "
                    "booleans, and text can be substituted into a spec"
                )
            tree = tree_write(tree, path, value)
        else:
            expressions.append((path, ph))

    for path, ph in expressions:
        env = dict(signal_snapshot)
        for var in expr.variables(ph.tree):
            root = var.split(".", 1)[0]
            if root in ("this", "other"):
                value = _read_accessor(
                    Placeholder("accessor", var, tuple(var.split("."))), tree, other_tree
                )
                env[var] = value
        try:
            value = expr.eval_expression(ph.tree, env)
        except EvalError as e:
            raise ResolveError(f"expression {ph.text!r} failed: {e}") from e
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ResolveError(f"expression {ph.text!r} must produce a number")
        tree = tree_write(tree, path, float(value))
    return tree


def resolve_placeholders(
    pair: tuple, signal_snapshot: dict
) -> tuple[Keyframe, Keyframe]:
    """Substitute every placeholder in a keyframe pair.

    Accessors and signal names resolve first (reading the merged trees as
    they stood after keyframe creation), then expressions evaluate with
    both in scope. The results are validated as full specs and laid out.
    """
    this, other = pair
    this_draft = this if isinstance(this, KeyframeDraft) else _as_draft(this)
    other_draft = other if isinstance(other, KeyframeDraft) else _as_draft(other)

    this_tree = _resolve_draft(this_draft, other_draft.tree, signal_snapshot)
    other_tree = _resolve_draft(other_draft, this_draft.tree, signal_snapshot)
    return (
        _finish(this_tree, this_draft.state_name),
        _finish(other_tree, other_draft.state_name),
    )


def _as_draft(kf: Keyframe) -> KeyframeDraft:
    return KeyframeDraft(kf.spec.to_tree(), kf.state_name, [])


def _finish(tree: dict, state_name: str) -> Keyframe:
    if _contains_placeholder(tree):
        raise ResolveError("unresolved placeholder survived resolution")
    try:
        spec = VisSpec(tree)
    except SchemaError as e:
        raise ResolveError(f"resolved keyframe is not a valid spec: {e}") from e
    return keyframe_from_spec(spec, state_name)


# ---------------------------------------------------------------------------
# Store


class KeyframeStore:
    """Endpoint keyframes per (instance, state), kept for the whole life of
    the instance and purged when it exits the state machine."""

    def __init__(self):
        self._entries: dict[tuple, Keyframe] = {}

    def store(self, instance_key: tuple, keyframe: Keyframe) -> None:
        self._entries[(instance_key, keyframe.state_name)] = keyframe

    def get(self, instance_key: tuple, state_name: str) -> Keyframe | None:
        return self._entries.get((instance_key, state_name))

    def purge_instance(self, instance_key: tuple) -> None:
        for key in [k for k in self._entries if k[0] == instance_key]:
            del self._entries[key]

    def __len__(self) -> int:
        return len(self._entries)

    def dump(self) -> str:
        lines = []
        for (instance, state), kf in self._entries.items():
            lines.append(
                json.dumps(
                    {"instance": list(instance), "state": state, "spec": kf.spec.to_tree()},
                    sort_keys=True,
                )
            )
        return "\n".join(lines)
