"""Expression language used by signals, triggers, and keyframe placeholders.

Plain infix syntax over numbers, booleans, 3-vectors, and rotations:

    normalise(tiltAngle, 0, 45)
    pinchOnVis && visOnSurface
    other.encoding.size.value * 10

Precedence, loosest first: ``||``, then ``!``/``&&``, then comparisons,
then ``+``/``-``, then ``*``/``/``, then unary minus. Identifiers may be
dotted: a dotted name is either an environment binding in its own right
(keyframe path accessors are bound that way) or component access on a
vector signal (``sliderPos.x``).

Evaluation is strictly tagged: mixing types raises EvalTypeError, division
by zero raises DivisionByZero. The signal layer converts those into
fault-holding behaviour; nothing here ever silently coerces.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ArityError, DivisionByZero, EvalError, EvalTypeError, ParseError
from .vecmath import Rotation, Vec3, angle_between_deg

# --- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Bool:
    value: bool


@dataclass(frozen=True)
class Var:
    name: str  # possibly dotted


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "!"
    operand: object


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


# arity: exact int, or (min, None) for variadic
FUNCTIONS = {
    "normalise": 3,
    "distance": 2,
    "angle": (1, 2),
    "clamp": 3,
    "abs": 1,
    "min": (2, None),
    "max": (2, None),
    "dot": 2,
}

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)"
    r"|(?P<op><=|>=|==|!=|&&|\|\||[-+*/!<>(),])"
    r")"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            col = len(text) - len(stripped) + 1
            raise ParseError(f"unexpected character {stripped[0]!r}", column=col)
        if m.group("num") is not None:
            tokens.append(("num", float(m.group(0)), m.start("num") + 1))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name"), m.start("name") + 1))
        else:
            tokens.append(("op", m.group("op"), m.start("op") + 1))
        pos = m.end()
    tokens.append(("end", None, len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, val, col = self.next()
        if kind != "op" or val != op:
            raise ParseError(f"expected {op!r}", column=col)

    def at_op(self, *ops) -> bool:
        kind, val, _ = self.peek()
        return kind == "op" and val in ops

    def parse(self):
        node = self.parse_or()
        kind, val, col = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing {val!r}", column=col)
        return node

    def parse_or(self):
        node = self.parse_and()
        while self.at_op("||"):
            self.next()
            node = Binary("||", node, self.parse_and())
        return node

    def parse_and(self):
        node = self.parse_not()
        while self.at_op("&&"):
            self.next()
            node = Binary("&&", node, self.parse_not())
        return node

    def parse_not(self):
        if self.at_op("!"):
            self.next()
            return Unary("!", self.parse_not())
        return self.parse_cmp()

    def parse_cmp(self):
        node = self.parse_add()
        if self.at_op("<", "<=", ">", ">=", "==", "!="):
            op = self.next()[1]
            node = Binary(op, node, self.parse_add())
        return node

    def parse_add(self):
        node = self.parse_mul()
        while self.at_op("+", "-"):
            op = self.next()[1]
            node = Binary(op, node, self.parse_mul())
        return node

    def parse_mul(self):
        node = self.parse_unary()
        while self.at_op("*", "/"):
            op = self.next()[1]
            node = Binary(op, node, self.parse_unary())
        return node

    def parse_unary(self):
        if self.at_op("-"):
            self.next()
            return Unary("-", self.parse_unary())
        return self.parse_primary()

    def parse_primary(self):
        kind, val, col = self.next()
        if kind == "num":
            return Num(val)
        if kind == "name":
            if val == "true":
                return Bool(True)
            if val == "false":
                return Bool(False)
            if self.at_op("("):
                return self.parse_call(val, col)
            return Var(val)
        if kind == "op" and val == "(":
            node = self.parse_or()
            self.expect_op(")")
            return node
        raise ParseError("expected a value", column=col)

    def parse_call(self, name: str, col: int):
        if name not in FUNCTIONS:
            raise ParseError(f"unknown function {name!r}", column=col)
        self.expect_op("(")
        args = []
        if not self.at_op(")"):
            args.append(self.parse_or())
            while self.at_op(","):
                self.next()
                args.append(self.parse_or())
        self.expect_op(")")
        spec = FUNCTIONS[name]
        if isinstance(spec, tuple):
            lo, hi = spec
            ok = len(args) >= lo and (hi is None or len(args) <= hi)
        else:
            ok = len(args) == spec
        if not ok:
            raise ArityError(f"{name} called with {len(args)} argument(s)", column=col)
        return Call(name, tuple(args))


def parse_expression(text: str):
    """Parse an expression string into an AST; ParseError carries a column."""
    if not text or not text.strip():
        raise ParseError("empty expression")
    return _Parser(text).parse()


def variables(tree) -> set[str]:
    """All (dotted) variable names referenced by an expression tree."""
    out: set[str] = set()
    _walk_vars(tree, out)
    return out


def _walk_vars(node, out: set[str]) -> None:
    if isinstance(node, Var):
        out.add(node.name)
    elif isinstance(node, Unary):
        _walk_vars(node.operand, out)
    elif isinstance(node, Binary):
        _walk_vars(node.left, out)
        _walk_vars(node.right, out)
    elif isinstance(node, Call):
        for a in node.args:
            _walk_vars(a, out)


# --- evaluation ----------------------------------------------------------------


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _num(v, what: str) -> float:
    if not _is_num(v):
        raise EvalTypeError(f"{what} expects a number, got {type(v).__name__}")
    return float(v)


def _lookup(name: str, env) -> object:
    if name in env:
        return env[name]
    if "." in name:
        base, comp = name.rsplit(".", 1)
        if base in env and comp in ("x", "y", "z"):
            v = env[base]
            if isinstance(v, Vec3):
                return getattr(v, comp)
            raise EvalTypeError(f"component access .{comp} on non-vector {base!r}")
    raise EvalError(f"unknown variable {name!r}")


def eval_expression(tree, env) -> object:
    """Evaluate an AST against name -> value bindings."""
    if isinstance(tree, Num):
        return tree.value
    if isinstance(tree, Bool):
        return tree.value
    if isinstance(tree, Var):
        return _lookup(tree.name, env)
    if isinstance(tree, Unary):
        v = eval_expression(tree.operand, env)
        if tree.op == "-":
            if isinstance(v, Vec3):
                return -v
            return -_num(v, "unary minus")
        if not isinstance(v, bool):
            raise EvalTypeError("! expects a boolean")
        return not v
    if isinstance(tree, Binary):
        return _eval_binary(tree, env)
    if isinstance(tree, Call):
        args = [eval_expression(a, env) for a in tree.args]
        return _call(tree.func, args)
    raise EvalError(f"bad expression node {tree!r}")


def _eval_binary(tree: Binary, env):
    op = tree.op
    if op in ("&&", "||"):
        left = eval_expression(tree.left, env)
        if not isinstance(left, bool):
            raise EvalTypeError(f"{op} expects booleans")
        if op == "&&" and not left:
            return False
        if op == "||" and left:
            return True
        right = eval_expression(tree.right, env)
        if not isinstance(right, bool):
            raise EvalTypeError(f"{op} expects booleans")
        return right

    left = eval_expression(tree.left, env)
    right = eval_expression(tree.right, env)
    if op in ("==", "!="):
        if type(left) is not type(right) and not (_is_num(left) and _is_num(right)):
            raise EvalTypeError("== expects operands of the same kind")
        eq = left == right
        return eq if op == "==" else not eq
    if op in ("<", "<=", ">", ">="):
        a, b = _num(left, op), _num(right, op)
        return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]
    if op == "+":
        if isinstance(left, Vec3) and isinstance(right, Vec3):
            return left + right
        return _num(left, "+") + _num(right, "+")
    if op == "-":
        if isinstance(left, Vec3) and isinstance(right, Vec3):
            return left - right
        return _num(left, "-") - _num(right, "-")
    if op == "*":
        if isinstance(left, Vec3) and _is_num(right):
            return left.scale(float(right))
        if isinstance(right, Vec3) and _is_num(left):
            return right.scale(float(left))
        return _num(left, "*") * _num(right, "*")
    if op == "/":
        a, b = _num(left, "/"), _num(right, "/")
        if b == 0.0:
            raise DivisionByZero("division by zero")
        return a / b
    raise EvalError(f"bad operator {op!r}")


def _call(func: str, args: list):
    if func == "normalise":
        x, lo, hi = (_num(a, "normalise") for a in args)
        if hi == lo:
            raise DivisionByZero("normalise with an empty range")
        t = (x - lo) / (hi - lo)
        return min(1.0, max(0.0, t))
    if func == "distance":
        a, b = args
        if not (isinstance(a, Vec3) and isinstance(b, Vec3)):
            raise EvalTypeError("distance expects two vectors")
        return (a - b).length()
    if func == "angle":
        if len(args) == 1:
            (r,) = args
            if not isinstance(r, Rotation):
                raise EvalTypeError("angle with one argument expects a rotation")
            return r.angle_deg()
        a, b = args
        if not (isinstance(a, Vec3) and isinstance(b, Vec3)):
            raise EvalTypeError("angle with two arguments expects vectors")
        try:
            return angle_between_deg(a, b)
        except ValueError as e:
            raise DivisionByZero(str(e)) from e
    if func == "clamp":
        x, lo, hi = (_num(a, "clamp") for a in args)
        return min(hi, max(lo, x))
    if func == "abs":
        return abs(_num(args[0], "abs"))
    if func in ("min", "max"):
        vals = [_num(a, func) for a in args]
        return min(vals) if func == "min" else max(vals)
    if func == "dot":
        a, b = args
        if not (isinstance(a, Vec3) and isinstance(b, Vec3)):
            raise EvalTypeError("dot expects two vectors")
        return a.dot(b)
    raise EvalError(f"unknown function {func!r}")


# --- static typing (best effort, used by lint) ----------------------------------

NUMBER, BOOLEAN, VEC3, ROTATION, TEXT, UNKNOWN = (
    "number",
    "boolean",
    "vec3",
    "rotation",
    "text",
    "unknown",
)

_FUNC_TYPES = {
    "normalise": NUMBER,
    "distance": NUMBER,
    "angle": NUMBER,
    "clamp": NUMBER,
    "abs": NUMBER,
    "min": NUMBER,
    "max": NUMBER,
    "dot": NUMBER,
}


def static_type(tree, var_types) -> str:
    """Infer the expression's result tag where possible; UNKNOWN otherwise."""
    if isinstance(tree, Num):
        return NUMBER
    if isinstance(tree, Bool):
        return BOOLEAN
    if isinstance(tree, Var):
        if tree.name in var_types:
            return var_types[tree.name]
        if "." in tree.name:
            base, comp = tree.name.rsplit(".", 1)
            if var_types.get(base) == VEC3 and comp in ("x", "y", "z"):
                return NUMBER
        return UNKNOWN
    if isinstance(tree, Unary):
        if tree.op == "!":
            return BOOLEAN
        return static_type(tree.operand, var_types)
    if isinstance(tree, Binary):
        if tree.op in ("&&", "||", "==", "!=", "<", "<=", ">", ">="):
            return BOOLEAN
        lt = static_type(tree.left, var_types)
        rt = static_type(tree.right, var_types)
        if tree.op in ("+", "-"):
            if lt == rt and lt in (NUMBER, VEC3):
                return lt
            return UNKNOWN if UNKNOWN in (lt, rt) else NUMBER
        if tree.op == "*":
            if VEC3 in (lt, rt):
                return VEC3
            return UNKNOWN if UNKNOWN in (lt, rt) else NUMBER
        return NUMBER
    if isinstance(tree, Call):
        return _FUNC_TYPES.get(tree.func, UNKNOWN)
    return UNKNOWN
