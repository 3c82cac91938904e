"""Coefficient expression language.

Coefficients are written as plain arithmetic over the variables ``t`` and
``x1 .. xd``::

    1 + 0.1*sin(x1)
    pos(-x1) + max(t, 2)^2

Supported functions: sin, cos, exp, log, sqrt, abs, min, max, pos, neg,
sign and step, where ``pos(y) = max(y, 0)``, ``neg(y) = max(-y, 0)``,
``sign(0) = 0`` and ``step(y) = 1 if y > 0 else 0``.  The constant ``pi``
is predefined.

Nonsmooth functions differentiate by case split with a one-sided
convention at ties: ``d pos(y) = step(y) dy``, so the derivative of ``pos``
at 0 is 0; ``min(a, b)`` takes the derivative of ``b`` at a tie and
``max(a, b)`` likewise.

Evaluation is vectorised over numpy arrays.  By default it is strict: a
square root of a negative number, a division by zero or a non-finite
result raises :class:`DomainError` naming the offending sub-expression and
the first point where it happened.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Expr", "Num", "Var", "Neg", "BinOp", "Call",
    "ExprError", "ParseError", "UnknownIdentifierError", "ArityError", "DomainError",
    "parse", "as_expr", "render", "evaluate", "evaluate_array", "differentiate",
    "substitute", "variables", "dimension", "uses_nonsmooth", "ZERO", "ONE",
]

ARITY = {
    "sin": 1, "cos": 1, "exp": 1, "log": 1, "sqrt": 1, "abs": 1,
    "pos": 1, "neg": 1, "sign": 1, "step": 1, "min": 2, "max": 2,
}
NONSMOOTH = frozenset({"abs", "pos", "neg", "min", "max", "sign", "step"})
CONSTANTS = {"pi": math.pi}

_VAR_RE = re.compile(r"x([1-9][0-9]*)\Z")


class ExprError(ValueError):
    """Base class for expression errors."""


class ParseError(ExprError):
    def __init__(self, message: str, offset: int, expected: Sequence[str] = ()):
        self.offset = offset
        self.expected = tuple(expected)
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at byte offset {offset}{detail}")


class UnknownIdentifierError(ParseError):
    pass


class ArityError(ParseError):
    pass


class DomainError(ExprError, ArithmeticError):
    """Evaluation left the domain of a primitive."""

    def __init__(self, reason: str, subexpr: "Expr", point: Mapping[str, float]):
        self.reason = reason
        self.subexpr = subexpr
        self.point = dict(point)
        where = ", ".join(f"{k}={v:.17g}" for k, v in self.point.items())
        super().__init__(f"{reason} in '{render(subexpr)}' at ({where})")


# --------------------------------------------------------------------------
# AST


class Expr:
    """Immutable expression node.  Supports ``+ - * / ** -`` for building trees."""

    __slots__ = ()

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __pow__(self, other):
        return power(self, as_expr(other))

    def __neg__(self):
        return neg(self)

    def __str__(self):
        return render(self)


@dataclass(frozen=True, repr=False)
class Num(Expr):
    value: float

    def __repr__(self):
        return f"Num({self.value!r})"


@dataclass(frozen=True, repr=False)
class Var(Expr):
    name: str

    def __repr__(self):
        return f"Var({self.name!r})"


@dataclass(frozen=True, repr=False)
class Neg(Expr):
    arg: Expr

    def __repr__(self):
        return f"Neg({self.arg!r})"


@dataclass(frozen=True, repr=False)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def __repr__(self):
        return f"BinOp({self.op!r}, {self.left!r}, {self.right!r})"


@dataclass(frozen=True, repr=False)
class Call(Expr):
    name: str
    args: tuple

    def __repr__(self):
        return f"Call({self.name!r}, {self.args!r})"


ZERO = Num(0.0)
ONE = Num(1.0)

ExprLike = Union[Expr, str, int, float]


def const(value: float) -> Expr:
    value = float(value)
    if value < 0:
        return Neg(Num(-value))
    return Num(value)


def _const_value(e: Expr):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Neg) and isinstance(e.arg, Num):
        return -e.arg.value
    return None


def as_expr(value: ExprLike) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return parse(value)
    if isinstance(value, (int, float, np.integer, np.floating)):
        return const(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to an expression")


# Light folding constructors keep derivative trees readable; they are not a
# general simplifier.

def add(a: Expr, b: Expr) -> Expr:
    va, vb = _const_value(a), _const_value(b)
    if va is not None and vb is not None:
        return const(va + vb)
    if va == 0.0:
        return b
    if vb == 0.0:
        return a
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    va, vb = _const_value(a), _const_value(b)
    if va is not None and vb is not None:
        return const(va - vb)
    if vb == 0.0:
        return a
    if va == 0.0:
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    va, vb = _const_value(a), _const_value(b)
    if va is not None and vb is not None:
        return const(va * vb)
    if va == 0.0 or vb == 0.0:
        return ZERO
    if va == 1.0:
        return b
    if vb == 1.0:
        return a
    if va == -1.0:
        return neg(b)
    if vb == -1.0:
        return neg(a)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    va, vb = _const_value(a), _const_value(b)
    if va is not None and vb is not None and vb != 0.0:
        return const(va / vb)
    if va == 0.0:
        return ZERO
    if vb == 1.0:
        return a
    return BinOp("/", a, b)


def power(a: Expr, b: Expr) -> Expr:
    vb = _const_value(b)
    if vb == 0.0:
        return ONE
    if vb == 1.0:
        return a
    return BinOp("^", a, b)


def neg(a: Expr) -> Expr:
    va = _const_value(a)
    if va is not None:
        return const(-va)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def call(name: str, *args: Expr) -> Expr:
    return Call(name, tuple(args))


# --------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # num | name | op | end
    text: str
    offset: int  # byte offset into the UTF-8 source


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    n = len(source)

    def byte_offset(i):
        return len(source[:i].encode("utf-8"))

    while pos < n:
        if source[pos:].strip() == "":
            pos = n
            break
        m = _TOKEN_RE.match(source, pos)
        if not m:
            j = pos
            while j < n and source[j].isspace():
                j += 1
            raise ParseError(f"unexpected character {source[j]!r}", byte_offset(j))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append(_Token(kind, m.group(kind), byte_offset(start)))
        pos = m.end()
    tokens.append(_Token("end", "", byte_offset(n)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect_op(self, text: str):
        if self.tok.kind == "op" and self.tok.text == text:
            return self.advance()
        raise ParseError(f"unexpected {self._describe(self.tok)}", self.tok.offset, [repr(text)])

    @staticmethod
    def _describe(tok: _Token) -> str:
        return "end of input" if tok.kind == "end" else repr(tok.text)

    def parse(self) -> Expr:
        e = self.expression()
        if self.tok.kind != "end":
            raise ParseError(f"unexpected {self._describe(self.tok)}", self.tok.offset,
                             ["'+'", "'-'", "'*'", "'/'", "'^'", "end of input"])
        return e

    def expression(self) -> Expr:
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            left = BinOp(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "name":
            self.advance()
            if self.tok.kind == "op" and self.tok.text == "(":
                return self.call(tok)
            if tok.text == "t" or _VAR_RE.match(tok.text):
                return Var(tok.text)
            if tok.text in CONSTANTS:
                return Var(tok.text)
            if tok.text in ARITY:
                raise ParseError(f"function {tok.text!r} needs an argument list", self.tok.offset, ["'('"])
            raise UnknownIdentifierError(f"unknown identifier {tok.text!r}", tok.offset)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            e = self.expression()
            self.expect_op(")")
            return e
        raise ParseError(f"unexpected {self._describe(tok)}", tok.offset,
                         ["number", "variable", "function", "'('", "'-'"])

    def call(self, name_tok: _Token) -> Expr:
        name = name_tok.text
        if name not in ARITY:
            raise UnknownIdentifierError(f"unknown function {name!r}", name_tok.offset)
        self.expect_op("(")
        args = []
        if not (self.tok.kind == "op" and self.tok.text == ")"):
            args.append(self.expression())
            while self.tok.kind == "op" and self.tok.text == ",":
                self.advance()
                args.append(self.expression())
        self.expect_op(")")
        if len(args) != ARITY[name]:
            raise ArityError(f"{name} takes {ARITY[name]} argument(s), got {len(args)}", name_tok.offset)
        return Call(name, tuple(args))


def parse(source: str) -> Expr:
    """Parse expression source text into an :class:`Expr` tree."""
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    return _Parser(source).parse()


# --------------------------------------------------------------------------
# Rendering

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC["neg"]
    return 5


def _render_num(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def render(e: Expr) -> str:
    """Render ``e`` as source text that parses back to an equal tree."""
    if isinstance(e, Num):
        if e.value < 0:
            return f"({_render_num(e.value)})"
        return _render_num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.name}({', '.join(render(a) for a in e.args)})"
    if isinstance(e, Neg):
        inner = render(e.arg)
        if _prec(e.arg) < _PREC["neg"] or (isinstance(e.arg, Num) and e.arg.value < 0):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        left, right = render(e.left), render(e.right)
        if e.op == "^":
            if _prec(e.left) <= p:
                left = f"({left})"
            if _prec(e.right) < _PREC["neg"]:
                right = f"({right})"
            return f"{left}^{right}"
        if _prec(e.left) < p:
            left = f"({left})"
        if _prec(e.right) <= p:
            right = f"({right})"
        return f"{left} {e.op} {right}"
    raise TypeError(f"not an expression: {e!r}")


# --------------------------------------------------------------------------
# Structure queries


def variables(e: Expr) -> frozenset:
    """Free variables of ``e`` (constants such as ``pi`` excluded)."""
    if isinstance(e, Var):
        return frozenset() if e.name in CONSTANTS else frozenset({e.name})
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, Neg):
        return variables(e.arg)
    if isinstance(e, BinOp):
        return variables(e.left) | variables(e.right)
    if isinstance(e, Call):
        out = frozenset()
        for a in e.args:
            out |= variables(a)
        return out
    raise TypeError(f"not an expression: {e!r}")


def dimension(e: Expr) -> int:
    """Largest spatial index used by ``e`` (0 if none)."""
    return max((int(v[1:]) for v in variables(e) if v != "t"), default=0)


def uses_nonsmooth(e: Expr) -> bool:
    if isinstance(e, Call):
        return e.name in NONSMOOTH or any(uses_nonsmooth(a) for a in e.args)
    if isinstance(e, Neg):
        return uses_nonsmooth(e.arg)
    if isinstance(e, BinOp):
        return uses_nonsmooth(e.left) or uses_nonsmooth(e.right)
    return False


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (no folding beyond the constructors)."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Num):
        return e
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, mapping))
    if isinstance(e, BinOp):
        return BinOp(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Call):
        return Call(e.name, tuple(substitute(a, mapping) for a in e.args))
    raise TypeError(f"not an expression: {e!r}")


# --------------------------------------------------------------------------
# Evaluation


def _env(t, x) -> dict:
    env = {"t": np.asarray(t, dtype=float)}
    for i, xi in enumerate(x, start=1):
        env[f"x{i}"] = np.asarray(xi, dtype=float)
    return env


def _first_point(env: dict, bad: np.ndarray) -> dict:
    idx = np.argwhere(bad)[0] if bad.ndim else ()
    point = {}
    for name, arr in env.items():
        a = np.broadcast_to(arr, bad.shape) if bad.ndim else arr
        point[name] = float(a[tuple(idx)])
    return point


class _Evaluator:
    def __init__(self, env: dict, strict: bool):
        self.env = env
        self.strict = strict
        shapes = [np.shape(v) for v in env.values()]
        self.shape = np.broadcast_shapes(*shapes) if shapes else ()

    def fail(self, reason: str, node: Expr, bad: np.ndarray):
        bad = np.broadcast_to(bad, self.shape) if self.shape else np.asarray(bad)
        raise DomainError(reason, node, _first_point(self.env, bad))

    def check(self, reason, node, value, bad):
        """Strict mode raises on ``bad``; lenient mode poisons those entries."""
        if np.any(bad):
            if self.strict:
                self.fail(reason, node, bad)
            value = np.where(bad, np.nan, value)
        return value

    def __call__(self, e: Expr):
        if isinstance(e, Num):
            return np.float64(e.value)
        if isinstance(e, Var):
            if e.name in CONSTANTS:
                return np.float64(CONSTANTS[e.name])
            try:
                return self.env[e.name]
            except KeyError:
                raise ExprError(f"variable {e.name!r} is not bound") from None
        if isinstance(e, Neg):
            return -self(e.arg)
        if isinstance(e, BinOp):
            a, b = self(e.left), self(e.right)
            with np.errstate(all="ignore"):
                if e.op == "+":
                    out = a + b
                elif e.op == "-":
                    out = a - b
                elif e.op == "*":
                    out = a * b
                elif e.op == "/":
                    out = self.check("division by zero", e, a / b, b == 0)
                else:
                    bad_neg = (a < 0) & (np.floor(b) != b)
                    bad_zero = (a == 0) & (b < 0)
                    out = np.power(a, b)
                    out = self.check("negative base with non-integer exponent", e, out, bad_neg)
                    out = self.check("zero raised to a negative power", e, out, bad_zero)
            return self.check("non-finite result", e, out, ~np.isfinite(out) & np.isfinite(a) & np.isfinite(b))
        if isinstance(e, Call):
            args = [self(a) for a in e.args]
            y = args[0]
            with np.errstate(all="ignore"):
                name = e.name
                if name == "sin":
                    out = np.sin(y)
                elif name == "cos":
                    out = np.cos(y)
                elif name == "exp":
                    out = np.exp(y)
                elif name == "log":
                    out = self.check("log of non-positive argument", e, np.log(y), y <= 0)
                elif name == "sqrt":
                    out = self.check("sqrt of negative argument", e, np.sqrt(y), y < 0)
                elif name == "abs":
                    out = np.abs(y)
                elif name == "pos":
                    out = np.maximum(y, 0.0)
                elif name == "neg":
                    out = np.maximum(-y, 0.0)
                elif name == "sign":
                    out = np.sign(y)
                elif name == "step":
                    out = np.where(y > 0, 1.0, 0.0)
                elif name == "min":
                    out = np.minimum(y, args[1])
                elif name == "max":
                    out = np.maximum(y, args[1])
                else:  # pragma: no cover - parser rejects unknown names
                    raise ExprError(f"unknown function {name!r}")
            finite_in = np.isfinite(args[0])
            for a in args[1:]:
                finite_in = finite_in & np.isfinite(a)
            return self.check("non-finite result", e, out, ~np.isfinite(out) & finite_in)
        raise TypeError(f"not an expression: {e!r}")


def evaluate_array(e: ExprLike, t, x: Sequence, strict: bool = True) -> np.ndarray:
    """Evaluate ``e`` with numpy broadcasting over ``t`` and the coordinates ``x``.

    ``x`` is a sequence of coordinate arrays (``x[0]`` binds ``x1``).  With
    ``strict=False`` domain violations produce NaN instead of raising.
    """
    e = as_expr(e)
    ev = _Evaluator(_env(t, x), strict)
    out = np.asarray(ev(e), dtype=float)
    if out.shape != ev.shape:
        out = np.broadcast_to(out, ev.shape).copy()
    return out


def evaluate(e: ExprLike, t: float = 0.0, x: Sequence[float] = ()) -> float:
    """Evaluate ``e`` at a single point ``(t, x)``."""
    return float(evaluate_array(e, t, [np.float64(v) for v in x]))


# --------------------------------------------------------------------------
# Differentiation


def _step(e: Expr) -> Expr:
    return Call("step", (e,))


def differentiate(e: ExprLike, var: str) -> Expr:
    """Exact symbolic derivative of ``e`` with respect to ``var``."""
    e = as_expr(e)
    if var != "t" and not _VAR_RE.match(var):
        raise ExprError(f"cannot differentiate with respect to {var!r}")
    return _d(e, var)


def _d(e: Expr, v: str) -> Expr:
    if isinstance(e, Num):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == v else ZERO
    if isinstance(e, Neg):
        return neg(_d(e.arg, v))
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        da, db = _d(a, v), _d(b, v)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, b), mul(a, db))
        if e.op == "/":
            return div(sub(mul(da, b), mul(a, db)), power(b, Num(2.0)))
        # power
        if v not in variables(b):
            return mul(mul(b, power(a, sub(b, ONE))), da)
        return mul(e, add(mul(db, Call("log", (a,))), div(mul(b, da), a)))
    if isinstance(e, Call):
        name = e.name
        y = e.args[0]
        dy = _d(y, v)
        if name in ("sign", "step"):
            return ZERO
        if name == "min" or name == "max":
            a, b = e.args
            da, db = dy, _d(b, v)
            pick_a = _step(sub(b, a)) if name == "min" else _step(sub(a, b))
            return add(mul(pick_a, da), mul(sub(ONE, pick_a), db))
        if _const_value(dy) == 0.0:
            return ZERO
        if name == "sin":
            return mul(Call("cos", (y,)), dy)
        if name == "cos":
            return neg(mul(Call("sin", (y,)), dy))
        if name == "exp":
            return mul(e, dy)
        if name == "log":
            return div(dy, y)
        if name == "sqrt":
            return div(dy, mul(Num(2.0), e))
        if name == "abs":
            return mul(Call("sign", (y,)), dy)
        if name == "pos":
            return mul(_step(y), dy)
        if name == "neg":
            return neg(mul(_step(neg(y)), dy))
    raise TypeError(f"not an expression: {e!r}")
