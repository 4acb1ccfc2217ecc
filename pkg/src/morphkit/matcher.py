"""State matching: does a visualisation satisfy a state's partial spec?

Matching is a conjunction over the partial spec's terms. Properties the
state does not mention are ignored, so a sparser state matches a superset
of visualisations. Placeholders count as wildcards here; their values only
matter at keyframe time. Matching looks at spec structure only, never at
data rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .morphspec import (
    Inequality,
    Literal,
    MatchTerm,
    MorphSpec,
    NullMarker,
    Placeholder,
    StateSpec,
    Wildcard,
)
from .visdoc import ABSENT, VisSpec, tree_get

REL_TOL = 1e-9


def numbers_equal(a: float, b: float) -> bool:
    return abs(a - b) <= REL_TOL * max(1.0, abs(a), abs(b))


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


@dataclass(frozen=True)
class MatchResult:
    matched: bool
    bindings: dict = field(default_factory=dict)  # path -> vis value (wildcard positions)
    failures: tuple = ()  # (path, reason) pairs

    def explain(self) -> str:
        if self.matched:
            return "matched"
        return "; ".join(f"{'.'.join(p)}: {r}" for p, r in self.failures)


def match_term(term: MatchTerm, vis_value) -> tuple[bool, str | None]:
    """Apply one term against the value found in the visualisation (which may
    be ABSENT). Returns (ok, reason-if-not)."""
    if isinstance(term, NullMarker):
        if vis_value is ABSENT:
            return True, None
        return False, "property must be absent"
    if vis_value is ABSENT:
        return False, "property missing"
    if isinstance(term, (Wildcard, Placeholder)):
        return True, None
    if isinstance(term, Inequality):
        if not _is_number(vis_value):
            return False, f"inequality needs a number, found {type(vis_value).__name__}"
        v, n = float(vis_value), term.number
        ok = {
            "<": v < n,
            "<=": v <= n,
            ">": v > n,
            ">=": v >= n,
            "==": numbers_equal(v, n),
            "!=": not numbers_equal(v, n),
        }[term.op]
        return (True, None) if ok else (False, f"{v} fails {term.op} {n}")
    if isinstance(term, Literal):
        expected = term.value
        if isinstance(expected, bool) or isinstance(vis_value, bool):
            ok = expected is vis_value
        elif _is_number(expected):
            ok = _is_number(vis_value) and numbers_equal(float(vis_value), float(expected))
        else:
            ok = vis_value == expected
        return (True, None) if ok else (False, f"expected {expected!r}, found {vis_value!r}")
    return False, f"unhandled term {term!r}"


def match_state(state: StateSpec, vis: VisSpec) -> MatchResult:
    """Match every term of the state's partial spec against the vis tree."""
    tree = vis.to_tree()
    bindings: dict = {}
    failures: list = []

    def walk(node, prefix):
        if isinstance(node, dict):
            if not node:
                value = tree_get(tree, prefix)
                if value is ABSENT:
                    failures.append((prefix, "channel missing"))
                else:
                    bindings[prefix] = value
                return
            for key, sub in node.items():
                walk(sub, prefix + (key,))
            return
        value = tree_get(tree, prefix)
        ok, reason = match_term(node, value)
        if not ok:
            failures.append((prefix, reason))
        elif isinstance(node, (Wildcard, Placeholder)):
            bindings[prefix] = value

    walk(state.partial, ())
    if failures:
        return MatchResult(False, {}, tuple(failures))
    return MatchResult(True, bindings, ())


def eligible_entries(morph: MorphSpec, vis: VisSpec) -> list[str]:
    """Non-restricted states the vis can enter, in declaration order."""
    return [
        s.name for s in morph.states if not s.restrict and match_state(s, vis).matched
    ]
