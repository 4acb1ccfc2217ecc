"""Morph specification parsing, validation, linting, and graph export.

A morph is states + signals + transitions, stored as one JSON document.
States carry a partial visualisation specification inline: every key that
is not ``name`` or ``restrict`` is part of the partial spec, and any value
position may hold a match primitive instead of a literal:

  * ``"*"``        the property must exist, any value
  * ``">= 100"``   the property must exist and satisfy the inequality
  * ``null``       the property must be absent
  * ``"this.encoding.y"`` / a signal name / an expression -- placeholders,
    treated as wildcards while matching and substituted at keyframe time

Parsing is strict and layered: ParseError for bad JSON, SchemaError for
shape problems, SemanticError for dangling references and duplicate names.
Defaults are materialized during parsing so downstream code never looks at
raw JSON again.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from . import expr, signals
from .easing import DEFAULT_EASING, EASING
from .errors import ParseError, SchemaError, SemanticError
from .visdoc import CHANNELS, FIELD_TYPES, VIEW_PROPS

PARTIAL_TOP_KEYS = ("mark",) + VIEW_PROPS + ("encoding",)

_INEQUALITY = re.compile(
    r"^\s*(?P<op><=|>=|==|!=|<|>)?\s*(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*$"
)
_ACCESSOR = re.compile(r"^(this|other)(\.[A-Za-z_][A-Za-z0-9_]*)+$")


# ---------------------------------------------------------------------------
# Match terms


@dataclass(frozen=True)
class Wildcard:
    def to_json(self):
        return "*"


@dataclass(frozen=True)
class NullMarker:
    def to_json(self):
        return None


@dataclass(frozen=True)
class Inequality:
    op: str
    number: float

    def to_json(self):
        num = int(self.number) if self.number == int(self.number) else self.number
        return f"{self.op} {num}"


@dataclass(frozen=True)
class Literal:
    value: object  # number | text | bool

    def to_json(self):
        return self.value


@dataclass(frozen=True)
class Placeholder:
    kind: str  # "accessor" | "signal" | "expression"
    text: str
    tree: object = field(compare=False, default=None)  # parsed expression / accessor path

    def to_json(self):
        return self.text


MatchTerm = Wildcard | NullMarker | Inequality | Literal | Placeholder


def classify_term(value, signal_names: set[str], loc: str) -> MatchTerm:
    """Map a JSON value position in a partial spec to a MatchTerm."""
    if value is None:
        return NullMarker()
    if isinstance(value, bool):
        return Literal(value)
    if isinstance(value, (int, float)):
        return Literal(float(value))
    if not isinstance(value, str):
        raise SchemaError(f"unsupported value {value!r} in partial spec", loc)
    if value == "*":
        return Wildcard()
    m = _INEQUALITY.match(value)
    if m:
        return Inequality(m.group("op") or "==", float(m.group("num")))
    if _ACCESSOR.match(value):
        path = tuple(value.split("."))
        return Placeholder("accessor", value, path)
    if value in signal_names:
        return Placeholder("signal", value)
    # an expression placeholder must actually compute something; a bare word
    # that is not a declared signal is a plain text literal
    try:
        tree = expr.parse_expression(value)
    except ParseError:
        return Literal(value)
    if isinstance(tree, (expr.Var, expr.Num, expr.Bool)):
        return Literal(value)
    for var in expr.variables(tree):
        base = var.split(".", 1)[0]
        if base in ("this", "other") or base in signal_names or var in signal_names:
            continue
        raise SemanticError(f"expression references undeclared signal {var!r}", loc)
    return Placeholder("expression", value, tree)


def term_is_placeholder(term: MatchTerm) -> bool:
    return isinstance(term, Placeholder)


# ---------------------------------------------------------------------------
# Partial specifications (nested dicts with MatchTerm leaves)


def parse_partial(obj: dict, signal_names: set[str], loc: str) -> dict:
    out = {}
    unknown = set(obj) - set(PARTIAL_TOP_KEYS)
    if unknown:
        raise SchemaError(f"unknown partial spec keys {sorted(unknown)}", loc)
    for key, value in obj.items():
        kloc = f"{loc}/{key}"
        if key == "encoding":
            if not isinstance(value, dict):
                if value is None:
                    out[key] = NullMarker()
                    continue
                raise SchemaError("encoding must be an object or null", kloc)
            enc = {}
            for channel, cval in value.items():
                cloc = f"{kloc}/{channel}"
                if channel not in CHANNELS:
                    raise SchemaError(f"unknown channel {channel!r}", cloc)
                if isinstance(cval, dict):
                    sub = {}
                    bad = set(cval) - {"field", "type", "value"}
                    if bad:
                        raise SchemaError(f"unknown encoding keys {sorted(bad)}", cloc)
                    for prop, pval in cval.items():
                        term = classify_term(pval, signal_names, f"{cloc}/{prop}")
                        if (
                            prop == "type"
                            and isinstance(term, Literal)
                            and term.value not in FIELD_TYPES
                        ):
                            raise SchemaError(
                                f"type must be one of {FIELD_TYPES}", f"{cloc}/type"
                            )
                        sub[prop] = term
                    enc[channel] = sub
                else:
                    enc[channel] = classify_term(cval, signal_names, cloc)
            out[key] = enc
        else:
            out[key] = classify_term(value, signal_names, kloc)
    return out


def partial_to_json(partial: dict):
    if isinstance(partial, dict):
        return {k: partial_to_json(v) for k, v in partial.items()}
    return partial.to_json()


def partial_node_paths(partial: dict) -> set[tuple]:
    """Paths "defined by" a partial spec: every leaf term and every channel
    subtree. The bare ``encoding`` container is not itself a defined
    property (a state mentioning only encoding.x must not claim the whole
    encoding block)."""
    out: set[tuple] = set()

    def walk(node, prefix):
        if isinstance(node, dict):
            if prefix and prefix != ("encoding",):
                out.add(prefix)
            for k, v in node.items():
                walk(v, prefix + (k,))
        else:
            out.add(prefix)

    walk(partial, ())
    return out


def iter_partial_terms(partial: dict, prefix=()):
    """Yield (path, term) for every leaf term; empty dicts yield a presence
    marker of None at their path."""
    for key, value in partial.items():
        path = prefix + (key,)
        if isinstance(value, dict):
            if value:
                yield from iter_partial_terms(value, path)
            else:
                yield path, None
        else:
            yield path, value


# ---------------------------------------------------------------------------
# Specs


@dataclass(frozen=True)
class StateSpec:
    name: str
    restrict: bool
    partial: dict  # nested dict with MatchTerm leaves

    def to_json(self) -> dict:
        out = {"name": self.name}
        if self.restrict:
            out["restrict"] = True
        out.update(partial_to_json(self.partial))
        return out


@dataclass(frozen=True)
class ControlSpec:
    timing: object = 0.0  # seconds, or a signal name
    easing: str = DEFAULT_EASING
    interrupted: str = "final"
    completed: str = "final"
    staging: dict = field(default_factory=dict)  # dotted path text -> (a, b)

    @property
    def timing_is_signal(self) -> bool:
        return isinstance(self.timing, str)

    def to_json(self) -> dict:
        out = {
            "timing": self.timing,
            "easing": self.easing,
            "interrupted": self.interrupted,
            "completed": self.completed,
        }
        if self.staging:
            out["staging"] = {k: list(v) for k, v in self.staging.items()}
        return out


@dataclass(frozen=True)
class TransitionSpec:
    name: str
    states: tuple[str, str]
    trigger: str | None
    trigger_tree: object = field(compare=False, default=None)
    control: ControlSpec = field(default_factory=ControlSpec)
    bidirectional: bool = False
    disablegrab: bool = False
    priority: int = 0

    @property
    def initial(self) -> str:
        return self.states[0]

    @property
    def final(self) -> str:
        return self.states[1]

    def to_json(self) -> dict:
        out = {"name": self.name, "states": list(self.states)}
        if self.trigger is not None:
            out["trigger"] = self.trigger
        out["control"] = self.control.to_json()
        out["bidirectional"] = self.bidirectional
        out["disablegrab"] = self.disablegrab
        out["priority"] = self.priority
        return out


@dataclass(frozen=True)
class MorphSpec:
    name: str
    states: tuple[StateSpec, ...]
    signals: tuple[signals.SignalSpec, ...]
    transitions: tuple[TransitionSpec, ...]

    def state(self, name: str) -> StateSpec:
        for s in self.states:
            if s.name == name:
                return s
        raise KeyError(name)

    def signal_names(self) -> set[str]:
        return {s.name for s in self.signals}

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "states": [s.to_json() for s in self.states],
            "signals": [s.to_json() for s in self.signals],
            "transitions": [t.to_json() for t in self.transitions],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Parsing


def _parse_control(obj, signal_names: set[str], loc: str) -> ControlSpec:
    if obj is None:
        return ControlSpec()
    if not isinstance(obj, dict):
        raise SchemaError("control must be an object", loc)
    if "stagger" in obj:
        raise SchemaError("staggering is not supported", f"{loc}/stagger")
    unknown = set(obj) - {"timing", "easing", "interrupted", "completed", "staging"}
    if unknown:
        raise SchemaError(f"unknown control keys {sorted(unknown)}", loc)
    timing = obj.get("timing", 0.0)
    if isinstance(timing, bool) or not isinstance(timing, (int, float, str)):
        raise SchemaError("timing must be a number of seconds or a signal name", f"{loc}/timing")
    if isinstance(timing, (int, float)):
        if timing < 0:
            raise SchemaError("timing must be >= 0", f"{loc}/timing")
        timing = float(timing)
    elif timing not in signal_names:
        raise SemanticError(f"timing names undeclared signal {timing!r}", f"{loc}/timing")
    easing = obj.get("easing", DEFAULT_EASING)
    if easing not in EASING:
        raise SchemaError(f"unknown easing {easing!r} (known: {sorted(EASING)})", f"{loc}/easing")
    interrupted = obj.get("interrupted", "final")
    if interrupted not in ("initial", "final", "ignore"):
        raise SchemaError("interrupted must be initial, final, or ignore", f"{loc}/interrupted")
    completed = obj.get("completed", "final")
    if completed not in ("initial", "final"):
        raise SchemaError("completed must be initial or final", f"{loc}/completed")
    staging = {}
    for key, window in (obj.get("staging") or {}).items():
        sloc = f"{loc}/staging/{key}"
        if key.split(".")[0] not in PARTIAL_TOP_KEYS:
            raise SchemaError(f"staging key {key!r} is not a property path", sloc)
        if (
            not isinstance(window, list)
            or len(window) != 2
            or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in window)
        ):
            raise SchemaError("staging windows are [start, end] arrays", sloc)
        a, b = float(window[0]), float(window[1])
        if not (0.0 <= a < b <= 1.0):
            raise SchemaError("staging window must satisfy 0 <= start < end <= 1", sloc)
        staging[key] = (a, b)
    return ControlSpec(timing, easing, interrupted, completed, staging)


def _parse_transition(obj, state_names: list[str], signal_names: set[str], loc: str) -> TransitionSpec:
    if not isinstance(obj, dict):
        raise SchemaError("transition must be an object", loc)
    unknown = set(obj) - {
        "name",
        "states",
        "trigger",
        "control",
        "bidirectional",
        "disablegrab",
        "priority",
    }
    if unknown:
        raise SchemaError(f"unknown transition keys {sorted(unknown)}", loc)
    name = obj.get("name")
    if not isinstance(name, str) or not name:
        raise SchemaError("transition needs a non-empty name", loc)
    pair = obj.get("states")
    if not isinstance(pair, list) or len(pair) != 2 or not all(isinstance(s, str) for s in pair):
        raise SchemaError("states must be a [initial, final] pair of names", f"{loc}/states")
    if pair[0] == pair[1]:
        raise SchemaError("initial and final state must differ", f"{loc}/states")
    for s in pair:
        if s not in state_names:
            raise SemanticError(f"transition references undefined state {s!r}", f"{loc}/states")
    trigger = obj.get("trigger")
    tree = None
    if trigger is not None:
        if not isinstance(trigger, str):
            raise SchemaError("trigger must be an expression string", f"{loc}/trigger")
        tree = expr.parse_expression(trigger)
        for var in expr.variables(tree):
            base = var.split(".", 1)[0]
            if var not in signal_names and base not in signal_names:
                raise SemanticError(
                    f"trigger references undeclared signal {var!r}", f"{loc}/trigger"
                )
        t = expr.static_type(tree, {})
        if t not in (expr.BOOLEAN, expr.UNKNOWN):
            raise SemanticError(f"trigger must be boolean-valued, found {t}", f"{loc}/trigger")
    control = _parse_control(obj.get("control"), signal_names, f"{loc}/control")
    for key in ("bidirectional", "disablegrab"):
        if key in obj and not isinstance(obj[key], bool):
            raise SchemaError(f"{key} must be a boolean", f"{loc}/{key}")
    priority = obj.get("priority", 0)
    if isinstance(priority, bool) or not isinstance(priority, int):
        raise SchemaError("priority must be an integer", f"{loc}/priority")
    return TransitionSpec(
        name=name,
        states=(pair[0], pair[1]),
        trigger=trigger,
        trigger_tree=tree,
        control=control,
        bidirectional=bool(obj.get("bidirectional", False)),
        disablegrab=bool(obj.get("disablegrab", False)),
        priority=priority,
    )


def parse_morph(text: str, default_name: str = "morph") -> MorphSpec:
    """Parse and fully validate a morph document from JSON text."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON: {e.msg}", column=e.colno) from e
    if not isinstance(raw, dict):
        raise SchemaError("morph must be a JSON object", "/")
    unknown = set(raw) - {"name", "states", "signals", "transitions"}
    if unknown:
        raise SchemaError(f"unknown morph keys {sorted(unknown)}", "/")
    name = raw.get("name", default_name)
    if not isinstance(name, str) or not name:
        raise SchemaError("morph name must be a non-empty string", "/name")

    sig_list = raw.get("signals", [])
    if not isinstance(sig_list, list):
        raise SchemaError("signals must be a list", "/signals")
    parsed_signals = [
        signals.parse_signal_spec(s, f"/signals/{i}") for i, s in enumerate(sig_list)
    ]
    names = [s.name for s in parsed_signals]
    for dup in _duplicates(names):
        raise SemanticError(f"duplicate signal name {dup!r}", "/signals")
    signal_names = set(names)
    # validates expression references and rejects dependency cycles
    signals.SignalGraph(parsed_signals)

    state_list = raw.get("states")
    if not isinstance(state_list, list):
        raise SchemaError("states must be a list", "/states")
    if len(state_list) < 2:
        raise SchemaError("a morph needs at least two states", "/states")
    parsed_states = []
    for i, s in enumerate(state_list):
        loc = f"/states/{i}"
        if not isinstance(s, dict):
            raise SchemaError("state must be an object", loc)
        sname = s.get("name")
        if not isinstance(sname, str) or not sname:
            raise SchemaError("state needs a non-empty name", loc)
        restrict = s.get("restrict", False)
        if not isinstance(restrict, bool):
            raise SchemaError("restrict must be a boolean", f"{loc}/restrict")
        partial_raw = {k: v for k, v in s.items() if k not in ("name", "restrict")}
        partial = parse_partial(partial_raw, signal_names, loc)
        parsed_states.append(StateSpec(sname, restrict, partial))
    for dup in _duplicates([s.name for s in parsed_states]):
        raise SemanticError(f"duplicate state name {dup!r}", "/states")
    state_names = [s.name for s in parsed_states]

    trans_list = raw.get("transitions")
    if not isinstance(trans_list, list) or len(trans_list) < 1:
        raise SchemaError("a morph needs at least one transition", "/transitions")
    parsed_transitions = [
        _parse_transition(t, state_names, signal_names, f"/transitions/{i}")
        for i, t in enumerate(trans_list)
    ]
    for dup in _duplicates([t.name for t in parsed_transitions]):
        raise SemanticError(f"duplicate transition name {dup!r}", "/transitions")

    return MorphSpec(name, tuple(parsed_states), tuple(parsed_signals), tuple(parsed_transitions))


def _duplicates(names: list[str]) -> list[str]:
    seen, dups = set(), []
    for n in names:
        if n in seen and n not in dups:
            dups.append(n)
        seen.add(n)
    return dups


# ---------------------------------------------------------------------------
# State machine graph and DOT export


@dataclass(frozen=True)
class GraphEdge:
    source: str
    target: str
    transition: str
    direction: str  # "forward" | "reverse" | "entry" | "exit"


@dataclass(frozen=True)
class StateMachineGraph:
    nodes: tuple[str, ...]  # entry, states in declaration order, exit
    edges: tuple[GraphEdge, ...]


def build_graph(morph: MorphSpec) -> StateMachineGraph:
    nodes = ("entry",) + tuple(s.name for s in morph.states) + ("exit",)
    edges = []
    for s in morph.states:
        if not s.restrict:
            edges.append(GraphEdge("entry", s.name, "", "entry"))
    for t in morph.transitions:
        edges.append(GraphEdge(t.initial, t.final, t.name, "forward"))
        if t.bidirectional:
            edges.append(GraphEdge(t.final, t.initial, t.name, "reverse"))
    for s in morph.states:
        edges.append(GraphEdge(s.name, "exit", "", "exit"))
    return StateMachineGraph(nodes, tuple(edges))


def export_dot(morph: MorphSpec) -> str:
    """GraphViz text for the morph's state machine; node order follows the
    declaration order so output is reproducible."""
    graph = build_graph(morph)
    lines = [f'digraph "{morph.name}" {{', "  rankdir=LR;"]
    lines.append('  entry [shape=point, label=""];')
    for s in morph.states:
        shape = "box" if s.restrict else "ellipse"
        lines.append(f'  "{s.name}" [shape={shape}];')
    lines.append('  exit [shape=doublecircle, label=""];')
    for e in graph.edges:
        if e.direction == "entry":
            lines.append(f'  entry -> "{e.target}" [label="state matched"];')
        elif e.direction == "exit":
            lines.append(f'  "{e.source}" -> exit [label="spec edited"];')
        elif e.direction == "forward":
            lines.append(f'  "{e.source}" -> "{e.target}" [label="{e.transition}"];')
        else:
            lines.append(
                f'  "{e.source}" -> "{e.target}" [label="{e.transition} (reverse)", style=dashed];'
            )
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Lint


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning" | "note"
    code: str
    location: str  # JSON-pointer-ish
    message: str

    def to_json(self) -> dict:
        return {
            "severity": self.severity,
            "code": self.code,
            "location": self.location,
            "message": self.message,
        }


def _paths_overlap(a: set[tuple], b: set[tuple]) -> bool:
    for pa in a:
        for pb in b:
            n = min(len(pa), len(pb))
            if pa[:n] == pb[:n]:
                return True
    return False


def transition_write_paths(morph: MorphSpec, t: TransitionSpec) -> set[tuple]:
    """Static overapproximation of the property paths a transition may touch:
    everything defined by either endpoint state."""
    s_i = morph.state(t.initial)
    s_f = morph.state(t.final)
    return partial_node_paths(s_i.partial) | partial_node_paths(s_f.partial)


def _literal_mark(state: StateSpec):
    term = state.partial.get("mark")
    if isinstance(term, Literal):
        return term.value
    return None


def _activation_states(t: TransitionSpec) -> set[str]:
    return {t.initial, t.final} if t.bidirectional else {t.initial}


def lint(morph: MorphSpec) -> list[Diagnostic]:
    """Static diagnostics beyond schema validation; parse errors aside, a
    morph with lint errors will still load but is unlikely to behave."""
    out: list[Diagnostic] = []
    state_idx = {s.name: i for i, s in enumerate(morph.states)}

    incoming: dict[str, int] = {s.name: 0 for s in morph.states}
    involved: dict[str, int] = {s.name: 0 for s in morph.states}
    for t in morph.transitions:
        incoming[t.final] += 1
        if t.bidirectional:
            incoming[t.initial] += 1
        involved[t.initial] += 1
        involved[t.final] += 1
    for s in morph.states:
        loc = f"/states/{state_idx[s.name]}"
        if s.restrict and incoming[s.name] == 0:
            out.append(
                Diagnostic(
                    "warning",
                    "UNREACHABLE_STATE",
                    loc,
                    f"restricted state {s.name!r} has no incoming transition",
                )
            )
        if involved[s.name] == 0:
            out.append(
                Diagnostic(
                    "warning",
                    "STATE_NOT_CONNECTED",
                    loc,
                    f"state {s.name!r} appears in no transition",
                )
            )

    # signal usage
    used: set[str] = set()
    sigs = list(morph.signals)
    for s in sigs:
        if isinstance(s, signals.ExpressionSignalSpec):
            for var in expr.variables(s.tree):
                used.add(var.split(".", 1)[0])
                used.add(var)
    for t in morph.transitions:
        if t.trigger_tree is not None:
            for var in expr.variables(t.trigger_tree):
                used.add(var.split(".", 1)[0])
                used.add(var)
        if t.control.timing_is_signal:
            used.add(t.control.timing)
    for s in morph.states:
        for _, term in iter_partial_terms(s.partial):
            if isinstance(term, Placeholder):
                if term.kind == "signal":
                    used.add(term.text)
                elif term.kind == "expression":
                    for var in expr.variables(term.tree):
                        used.add(var.split(".", 1)[0])
                        used.add(var)
    for i, s in enumerate(sigs):
        if s.name not in used:
            out.append(
                Diagnostic(
                    "warning",
                    "UNUSED_SIGNAL",
                    f"/signals/{i}",
                    f"signal {s.name!r} is never referenced",
                )
            )

    # timing signals should be numbers
    graph = signals.SignalGraph(sigs)
    types = graph.static_types()
    for i, t in enumerate(morph.transitions):
        if t.control.timing_is_signal:
            ty = types.get(t.control.timing, expr.UNKNOWN)
            if ty not in (expr.NUMBER, expr.UNKNOWN):
                out.append(
                    Diagnostic(
                        "warning",
                        "TIMING_NOT_NUMERIC",
                        f"/transitions/{i}/control/timing",
                        f"timing signal {t.control.timing!r} has type {ty}",
                    )
                )

    # mark kind changes cannot be animated
    for i, t in enumerate(morph.transitions):
        mi = _literal_mark(morph.state(t.initial))
        mf = _literal_mark(morph.state(t.final))
        if mi is not None and mf is not None and mi != mf:
            out.append(
                Diagnostic(
                    "error",
                    "MARK_CHANGE",
                    f"/transitions/{i}",
                    f"transition {t.name!r} changes mark kind {mi!r} -> {mf!r}",
                )
            )

    # equal-priority transitions that can activate together and write
    # overlapping properties
    for i, a in enumerate(morph.transitions):
        for j in range(i + 1, len(morph.transitions)):
            b = morph.transitions[j]
            if a.priority != b.priority:
                continue
            if not (_activation_states(a) & _activation_states(b)):
                continue
            if _paths_overlap(
                transition_write_paths(morph, a), transition_write_paths(morph, b)
            ):
                out.append(
                    Diagnostic(
                        "warning",
                        "CONFLICT",
                        f"/transitions/{j}",
                        f"transitions {a.name!r} and {b.name!r} share priority "
                        f"{a.priority} and write overlapping properties",
                    )
                )

    # two open states where one partial subsumes the other always match together
    open_states = [s for s in morph.states if not s.restrict]
    for i, a in enumerate(open_states):
        for b in open_states[i + 1 :]:
            if _subsumes(a.partial, b.partial) or _subsumes(b.partial, a.partial):
                out.append(
                    Diagnostic(
                        "note",
                        "MULTI_MATCH",
                        f"/states/{state_idx[b.name]}",
                        f"states {a.name!r} and {b.name!r} can match the same "
                        "visualisation; entry uses declaration order",
                    )
                )
    return out


def _subsumes(smaller: dict, larger: dict) -> bool:
    """True when every term of `smaller` appears identically in `larger`."""
    small = dict(iter_partial_terms(smaller))
    large = dict(iter_partial_terms(larger))
    return all(path in large and large[path] == term for path, term in small.items())
