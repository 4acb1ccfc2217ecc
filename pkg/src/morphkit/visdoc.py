"""Visualisation specification model, path access, and a small layout engine.

A visualisation document is held as a canonical JSON-like tree with the
top-level keys ``mark``, ``width``, ``height``, ``depth``, ``encoding`` and
``data``. VisSpec wraps a validated tree; every mutation goes through
path_write and returns a new value, so specs can be shared freely.

The layout engine stands in for a real renderer: it places one mark per
data row inside the box [0,width] x [0,height] x [0,depth] using linear
scales for quantitative channels and evenly spaced band centers for
nominal ones. It exists so deictic targeting and the playground have
geometry to work with; rendering fidelity is explicitly not a goal.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

from .errors import LayoutError, ParseError, SchemaError
from .vecmath import Rotation, Vec3, rotation_from_json, rotation_to_json

CHANNELS = ("x", "y", "z", "color", "size", "facetwrap", "yoffset", "xoffset")
FIELD_TYPES = ("quantitative", "nominal", "ordinal")
VIEW_PROPS = ("width", "height", "depth")
TOP_KEYS = ("mark",) + VIEW_PROPS + ("encoding", "data")

# Positional channel -> (extent key, offset channel)
_AXIS_INFO = {"x": ("width", "xoffset"), "y": ("height", "yoffset"), "z": ("depth", None)}

ABSENT = object()  # sentinel: "no value at this path"; distinct from JSON null


# ---------------------------------------------------------------------------
# Path helpers. A property path is a tuple of key strings such as
# ("encoding", "x", "field"). Paths are also written dotted: "encoding.x.field".

PropPath = tuple

def parse_path(text: str) -> PropPath:
    segs = tuple(s for s in text.split(".") if s)
    validate_path(segs)
    return segs


def path_text(path: PropPath) -> str:
    return ".".join(path)


def validate_path(path: PropPath) -> None:
    if not path:
        raise SchemaError("empty property path")
    if path[0] not in TOP_KEYS:
        raise SchemaError(f"path must start with one of {TOP_KEYS}, got {path[0]!r}")


def tree_get(tree, path: PropPath):
    """Raw lookup: returns the value or sub-record at path, or ABSENT."""
    node = tree
    for seg in path:
        if not isinstance(node, dict) or seg not in node:
            return ABSENT
        node = node[seg]
    return node


def tree_write(tree: dict, path: PropPath, value) -> dict:
    """Raw functional update. Writing ABSENT removes the property and prunes
    empty parent records. The input tree is never mutated."""
    out = copy.deepcopy(tree)
    if value is ABSENT:
        _remove(out, path)
    else:
        node = out
        for seg in path[:-1]:
            nxt = node.get(seg)
            if not isinstance(nxt, dict):
                nxt = {}
                node[seg] = nxt
            node = nxt
        node[path[-1]] = copy.deepcopy(value)
    return out


def _remove(node: dict, path: PropPath) -> None:
    if len(path) == 1:
        node.pop(path[0], None)
        return
    child = node.get(path[0])
    if isinstance(child, dict):
        _remove(child, path[1:])
        if not child:
            del node[path[0]]


def iter_leaf_paths(tree, prefix=()):
    """Yield (path, value) for every leaf of a canonical tree."""
    if isinstance(tree, dict):
        for k, v in tree.items():
            yield from iter_leaf_paths(v, prefix + (k,))
    else:
        yield prefix, tree


# ---------------------------------------------------------------------------
# Data tables


@dataclass(frozen=True)
class Column:
    name: str
    kind: str  # "number" | "text"


class DataTable:
    """Immutable inline data: named typed columns plus row tuples."""

    def __init__(self, columns: list[Column], rows: list[tuple]):
        names = [c.name for c in columns]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column name in data", "/data/columns")
        for c in columns:
            if c.kind not in ("number", "text"):
                raise SchemaError(f"unknown column kind {c.kind!r}", f"/data/columns/{c.name}")
        for i, row in enumerate(rows):
            if len(row) != len(columns):
                raise SchemaError(f"row {i} has arity {len(row)}, expected {len(columns)}", "/data/rows")
        self.columns = tuple(columns)
        self.rows = tuple(tuple(r) for r in rows)
        self._index = {c.name: i for i, c in enumerate(self.columns)}

    def has_column(self, name: str) -> bool:
        return name in self._index

    def column_kind(self, name: str) -> str:
        return self.columns[self._index[name]].kind

    def values(self, name: str) -> list:
        i = self._index[name]
        return [row[i] for row in self.rows]

    def __len__(self) -> int:
        return len(self.rows)

    def to_tree(self) -> dict:
        return {
            "columns": [{"name": c.name, "kind": c.kind} for c in self.columns],
            "rows": [list(r) for r in self.rows],
        }

    @staticmethod
    def from_tree(obj) -> "DataTable":
        if not isinstance(obj, dict):
            raise SchemaError("data must be an object", "/data")
        unknown = set(obj) - {"columns", "rows"}
        if unknown:
            raise SchemaError(f"unknown data keys {sorted(unknown)}", "/data")
        cols = []
        for c in obj.get("columns", []):
            if not isinstance(c, dict) or "name" not in c or "kind" not in c:
                raise SchemaError("column entries need name and kind", "/data/columns")
            cols.append(Column(str(c["name"]), str(c["kind"])))
        return DataTable(cols, [tuple(r) for r in obj.get("rows", [])])

    @staticmethod
    def empty() -> "DataTable":
        return DataTable([], [])


# ---------------------------------------------------------------------------
# VisSpec


@dataclass(frozen=True)
class Pose:
    position: Vec3 = field(default_factory=Vec3)
    rotation: Rotation = field(default_factory=Rotation)

    def to_json(self) -> dict:
        return {"position": self.position.to_list(), "rotation": rotation_to_json(self.rotation)}

    @staticmethod
    def from_json(obj) -> "Pose":
        pos = Vec3.from_list(obj.get("position", [0, 0, 0]))
        rot = rotation_from_json(obj["rotation"]) if "rotation" in obj else Rotation.identity()
        return Pose(pos, rot)


class VisSpec:
    """A validated visualisation document.

    Equality and serialization are defined over the canonical tree; the pose
    is carried for scenario convenience (the scene owns it at runtime) and
    takes no part in matching, paths, or equality.
    """

    def __init__(self, tree: dict, pose: Pose | None = None):
        validate_tree(tree)
        self._tree = copy.deepcopy(tree)
        self.pose = pose or Pose()

    # -- structured accessors -------------------------------------------------
    @property
    def mark(self) -> str:
        return self._tree["mark"]

    @property
    def encoding(self) -> dict:
        return copy.deepcopy(self._tree.get("encoding", {}))

    @property
    def data(self) -> DataTable:
        return DataTable.from_tree(self._tree.get("data", {"columns": [], "rows": []}))

    def view_prop(self, name: str, default: float = 1.0) -> float:
        return float(self._tree.get(name, default))

    def to_tree(self) -> dict:
        return copy.deepcopy(self._tree)

    def to_json(self, include_pose: bool = False) -> dict:
        out = self.to_tree()
        if include_pose:
            out["pose"] = self.pose.to_json()
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_tree(), sort_keys=True, separators=(",", ":"))

    def __eq__(self, other) -> bool:
        return isinstance(other, VisSpec) and self._tree == other._tree

    def __hash__(self):
        return hash(self.dumps())

    def __repr__(self) -> str:
        return f"VisSpec(mark={self.mark!r}, channels={sorted(self._tree.get('encoding', {}))})"


def validate_tree(tree) -> None:
    """Check the VisSpec invariants on a canonical tree; raise SchemaError."""
    if not isinstance(tree, dict):
        raise SchemaError("visualisation spec must be a JSON object", "/")
    unknown = set(tree) - set(TOP_KEYS)
    if unknown:
        raise SchemaError(f"unknown top-level keys {sorted(unknown)}", "/")
    if "mark" not in tree:
        raise SchemaError("missing mark", "/mark")
    if not isinstance(tree["mark"], str) or not tree["mark"]:
        raise SchemaError("mark must be a non-empty string", "/mark")
    for prop in VIEW_PROPS:
        if prop in tree:
            v = tree[prop]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise SchemaError(f"{prop} must be a number", f"/{prop}")
    data = DataTable.from_tree(tree["data"]) if "data" in tree else DataTable.empty()
    enc = tree.get("encoding", {})
    if not isinstance(enc, dict):
        raise SchemaError("encoding must be an object", "/encoding")
    for channel, spec in enc.items():
        loc = f"/encoding/{channel}"
        if channel not in CHANNELS:
            raise SchemaError(f"unknown channel {channel!r}", loc)
        if not isinstance(spec, dict):
            raise SchemaError("channel definition must be an object", loc)
        unknown = set(spec) - {"field", "type", "value"}
        if unknown:
            raise SchemaError(f"unknown encoding keys {sorted(unknown)}", loc)
        has_field, has_value = "field" in spec, "value" in spec
        if has_field == has_value:
            raise SchemaError("exactly one of field or value required", loc)
        if has_field:
            if "type" not in spec:
                raise SchemaError("type required when field is present", loc)
            if not data.has_column(str(spec["field"])):
                raise SchemaError(f"field {spec['field']!r} is not a data column", f"{loc}/field")
        if "type" in spec and spec["type"] not in FIELD_TYPES:
            raise SchemaError(f"type must be one of {FIELD_TYPES}", f"{loc}/type")


def parse_vis_spec(text: str) -> VisSpec:
    """Parse UTF-8 JSON into a validated VisSpec; the optional top-level
    "pose" key is split off before validation."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON: {e.msg}", column=e.colno) from e
    if not isinstance(raw, dict):
        raise SchemaError("visualisation spec must be a JSON object", "/")
    pose = None
    if "pose" in raw:
        raw = dict(raw)
        pose = Pose.from_json(raw.pop("pose"))
    return VisSpec(raw, pose)


def path_get(spec: VisSpec, path: PropPath):
    """Value or sub-record at path, or ABSENT; never raises on missing keys."""
    validate_path(tuple(path))
    return tree_get(spec.to_tree(), tuple(path))


def path_write(spec: VisSpec, path: PropPath, value) -> VisSpec:
    """Functional update; ABSENT removes. Raises SchemaError when the result
    violates an invariant (pass raw trees through tree_write to stage
    intermediate states instead)."""
    validate_path(tuple(path))
    return VisSpec(tree_write(spec.to_tree(), tuple(path), value), spec.pose)


# ---------------------------------------------------------------------------
# Layout

# Fixed categorical palette (10 entries) and a 2-stop continuous ramp.
PALETTE = (
    (0.122, 0.467, 0.706),
    (1.000, 0.498, 0.055),
    (0.173, 0.627, 0.173),
    (0.839, 0.153, 0.157),
    (0.580, 0.404, 0.741),
    (0.549, 0.337, 0.294),
    (0.890, 0.467, 0.761),
    (0.498, 0.498, 0.498),
    (0.737, 0.741, 0.133),
    (0.090, 0.745, 0.812),
)
RAMP_LO = (0.878, 0.925, 0.957)
RAMP_HI = (0.031, 0.271, 0.580)
DEFAULT_COLOR = (0.310, 0.480, 0.650)
DEFAULT_MARK_EDGE = 0.05

NAMED_COLORS = {
    "red": (1.0, 0.0, 0.0),
    "green": (0.0, 0.8, 0.0),
    "blue": (0.0, 0.0, 1.0),
    "white": (1.0, 1.0, 1.0),
    "black": (0.0, 0.0, 0.0),
    "grey": (0.5, 0.5, 0.5),
    "gray": (0.5, 0.5, 0.5),
    "orange": (1.0, 0.65, 0.0),
    "purple": (0.5, 0.0, 0.5),
    "yellow": (1.0, 1.0, 0.0),
    "cyan": (0.0, 1.0, 1.0),
    "magenta": (1.0, 0.0, 1.0),
}


def parse_color(value) -> tuple[float, float, float]:
    if isinstance(value, str):
        name = value.lower()
        if name in NAMED_COLORS:
            return NAMED_COLORS[name]
        if name.startswith("#") and len(name) == 7:
            return tuple(int(name[i : i + 2], 16) / 255.0 for i in (1, 3, 5))
    raise LayoutError(f"cannot interpret color constant {value!r}")


@dataclass(frozen=True)
class Mark:
    position: Vec3
    size: Vec3
    color: tuple[float, float, float]
    facet: int = 0

    def to_json(self) -> dict:
        return {
            "position": self.position.to_list(),
            "size": self.size.to_list(),
            "color": list(self.color),
            "facet": self.facet,
        }


@dataclass(frozen=True)
class MarkLayout:
    marks: tuple[Mark, ...]
    extent: Vec3  # (width, height, depth) of the containing box

    def to_json(self) -> dict:
        return {"extent": self.extent.to_list(), "marks": [m.to_json() for m in self.marks]}


def _categories(values) -> list:
    seen, out = set(), []
    for v in values:
        if v not in seen:
            seen.add(v)
            out.append(v)
    return out


def _linear(values, extent):
    if not values:
        return []
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.0 for _ in values]
    return [(v - lo) / (hi - lo) * extent for v in values]


def _channel(enc: dict, name: str):
    return enc.get(name)


def _require_numeric(data: DataTable, field_name: str, channel: str):
    if data.column_kind(field_name) != "number":
        raise LayoutError(f"quantitative channel {channel!r} bound to text column {field_name!r}")
    return [float(v) for v in data.values(field_name)]


def compute_layout(spec: VisSpec) -> MarkLayout:
    """Deterministic mark geometry for a spec; one mark per data row.

    Scales are recomputed from data extents every call (no domain memory),
    so identical specs always produce identical layouts.
    """
    data = spec.data
    n = len(data)
    enc = spec.encoding
    width = spec.view_prop("width")
    height = spec.view_prop("height")
    depth = spec.view_prop("depth")
    extents = {"x": width, "y": height, "z": depth}

    bar_like = spec.mark in ("bar", "cube")
    y_def = _channel(enc, "y")
    y_quant_field = bool(y_def and "field" in y_def and y_def.get("type") == "quantitative")
    nominal_base = any(
        (d := _channel(enc, c)) and "field" in d and d.get("type") in ("nominal", "ordinal")
        for c in ("x", "z")
    )
    bar_semantics = bar_like and y_quant_field and nominal_base

    positions = {c: [0.0] * n for c in ("x", "y", "z")}
    sizes = {c: [DEFAULT_MARK_EDGE] * n for c in ("x", "y", "z")}
    heights = None  # scaled bar heights when bar semantics apply
    offsets_y = [0.0] * n

    for channel in ("x", "y", "z"):
        cdef = _channel(enc, channel)
        extent = extents[channel]
        offset_channel = _AXIS_INFO[channel][1]
        odef = _channel(enc, offset_channel) if offset_channel else None
        if cdef is None:
            continue
        if "value" in cdef:
            positions[channel] = [float(cdef["value"])] * n
            continue
        fname, ftype = str(cdef["field"]), cdef["type"]
        if ftype == "quantitative":
            vals = _require_numeric(data, fname, channel)
            if odef is not None and "field" in odef and odef.get("type") == "quantitative":
                offs = _require_numeric(data, str(odef["field"]), offset_channel)
                joint = max((v + o for v, o in zip(vals, offs)), default=0.0)
                scale = (extent / joint) if joint > 0 else 0.0
                scaled = [v * scale for v in vals]
                scaled_offs = [o * scale for o in offs]
            else:
                scaled = _linear(vals, extent)
                scaled_offs = [0.0] * n
            if channel == "y" and bar_semantics:
                heights = scaled
                offsets_y = scaled_offs
                positions["y"] = [o + v / 2.0 for o, v in zip(scaled_offs, scaled)]
            else:
                positions[channel] = [v + o for v, o in zip(scaled, scaled_offs)]
        else:
            cats = _categories(data.values(fname))
            band = extent / len(cats) if cats else extent
            idx = {c: i for i, c in enumerate(cats)}
            base = [(idx[v] + 0.5) * band for v in data.values(fname)]
            if odef is not None and "field" in odef:
                oname, otype = str(odef["field"]), odef.get("type")
                if otype in ("nominal", "ordinal"):
                    ocats = _categories(data.values(oname))
                    sub = band / len(ocats) if ocats else band
                    oidx = {c: i for i, c in enumerate(ocats)}
                    base = [
                        b - band / 2.0 + (oidx[v] + 0.5) * sub
                        for b, v in zip(base, data.values(oname))
                    ]
                    band = sub
                else:
                    offs = _require_numeric(data, oname, offset_channel)
                    omax = max((abs(o) for o in offs), default=0.0)
                    base = [
                        b + (o / omax * band / 2.0 if omax > 0 else 0.0)
                        for b, o in zip(base, offs)
                    ]
            positions[channel] = base
            if bar_like:
                sizes[channel] = [band * 0.8] * n

    if bar_semantics and heights is not None:
        sizes["y"] = list(heights)

    # size channel: constant edge in scene units, or a normalized quantitative ramp
    sdef = _channel(enc, "size")
    if sdef is not None:
        if "value" in sdef:
            edge = [float(sdef["value"])] * n
        else:
            vals = _require_numeric(data, str(sdef["field"]), "size")
            norm = _linear(vals, 1.0) if n else []
            edge = [0.02 + 0.08 * t for t in norm]
        if bar_semantics:
            for c in ("x", "z"):
                sizes[c] = list(edge)
        else:
            for c in ("x", "y", "z"):
                sizes[c] = list(edge)

    colors = [DEFAULT_COLOR] * n
    cdef = _channel(enc, "color")
    if cdef is not None:
        if "value" in cdef:
            colors = [parse_color(cdef["value"])] * n
        else:
            fname, ftype = str(cdef["field"]), cdef["type"]
            if ftype == "quantitative":
                vals = _require_numeric(data, fname, "color")
                norm = _linear(vals, 1.0)
                colors = [
                    tuple(RAMP_LO[i] + (RAMP_HI[i] - RAMP_LO[i]) * t for i in range(3))
                    for t in norm
                ]
            else:
                cats = _categories(data.values(fname))
                idx = {c: i for i, c in enumerate(cats)}
                colors = [PALETTE[idx[v] % len(PALETTE)] for v in data.values(fname)]

    facets = [0] * n
    fdef = _channel(enc, "facetwrap")
    if fdef is not None and "field" in fdef:
        cats = _categories(data.values(str(fdef["field"])))
        idx = {c: i for i, c in enumerate(cats)}
        facets = [idx[v] for v in data.values(str(fdef["field"]))]

    marks = tuple(
        Mark(
            Vec3(positions["x"][i], positions["y"][i], positions["z"][i]),
            Vec3(sizes["x"][i], sizes["y"][i], sizes["z"][i]),
            colors[i],
            facets[i],
        )
        for i in range(n)
    )
    return MarkLayout(marks, Vec3(width, height, depth))


def lerp_layout(a: MarkLayout, b: MarkLayout, ts: dict[str, float], facet_t: float) -> MarkLayout:
    """Interpolate two layouts mark-by-mark (marks correspond by row index).

    ts supplies the per-component local progress: keys "x", "y", "z", "color".
    Facet indices snap when facet_t crosses 0.5.
    """
    n = min(len(a.marks), len(b.marks))
    marks = []
    for i in range(n):
        ma, mb = a.marks[i], b.marks[i]
        pos = Vec3(
            ma.position.x + (mb.position.x - ma.position.x) * ts["x"],
            ma.position.y + (mb.position.y - ma.position.y) * ts["y"],
            ma.position.z + (mb.position.z - ma.position.z) * ts["z"],
        )
        size = Vec3(
            ma.size.x + (mb.size.x - ma.size.x) * ts["x"],
            ma.size.y + (mb.size.y - ma.size.y) * ts["y"],
            ma.size.z + (mb.size.z - ma.size.z) * ts["z"],
        )
        color = tuple(ca + (cb - ca) * ts["color"] for ca, cb in zip(ma.color, mb.color))
        facet = mb.facet if facet_t >= 0.5 else ma.facet
        marks.append(Mark(pos, size, color, facet))
    ext = vec3_lerp_all(a.extent, b.extent, ts)
    return MarkLayout(tuple(marks), ext)


def vec3_lerp_all(a: Vec3, b: Vec3, ts: dict[str, float]) -> Vec3:
    return Vec3(
        a.x + (b.x - a.x) * ts["x"],
        a.y + (b.y - a.y) * ts["y"],
        a.z + (b.z - a.z) * ts["z"],
    )
