"""Scalar expression trees: parsing, evaluation and exact differentiation.

Expressions are immutable trees of small frozen dataclasses.  ``parse`` builds
the tree literally from the grammar; ``derivative`` builds new trees through
the simplifying constructors (``add``, ``mul``, ...) which only fold constants
and drop neutral elements.

Grammar::

    expr  := term (("+"|"-") term)*
    term  := unary (("*"|"/") unary)*
    unary := "-" unary | power
    power := atom ("^" unary)?
    atom  := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Expr", "Const", "Var", "Neg", "Add", "Sub", "Mul", "Div", "Pow",
    "Sin", "Cos", "Tan", "Exp", "Log", "Sqrt", "FUNCTIONS",
    "ExprSyntaxError", "UnknownVariable", "EvalError",
    "parse", "evaluate", "evaluate_array", "derivative", "to_string",
    "variables", "substitute", "as_expr", "eval_table", "sum_exprs",
    "const", "neg", "add", "sub", "mul", "div", "power", "call", "is_zero",
    "ZERO", "ONE",
]

MAX_EXPANDED_POWER = 8


class ExprSyntaxError(ValueError):
    """Malformed expression source.

    ``offset`` is the 1-based byte position at which parsing failed; the end
    of input of an ``n``-byte source is position ``n + 1``.
    """

    def __init__(self, message: str, offset: int, expected: str):
        super().__init__(f"{message} at offset {offset} (expected {expected})")
        self.offset = offset
        self.expected = expected


class UnknownVariable(ValueError):
    def __init__(self, name: str):
        super().__init__(f"unknown variable {name!r}")
        self.name = name


class EvalError(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# nodes


class Expr:
    __slots__ = ()

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True, slots=True)
class Const(Expr):
    value: float

    def __repr__(self) -> str:
        return f"Const({self.value!r})"


@dataclass(frozen=True, slots=True)
class Var(Expr):
    name: str

    def __repr__(self) -> str:
        return f"Var({self.name})"


@dataclass(frozen=True, slots=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True, slots=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class Div(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class Pow(Expr):
    base: Expr
    exponent: Expr


@dataclass(frozen=True, slots=True)
class Call(Expr):
    arg: Expr
    name = ""


class Sin(Call):
    __slots__ = ()
    name = "sin"


class Cos(Call):
    __slots__ = ()
    name = "cos"


class Tan(Call):
    __slots__ = ()
    name = "tan"


class Exp(Call):
    __slots__ = ()
    name = "exp"


class Log(Call):
    __slots__ = ()
    name = "log"


class Sqrt(Call):
    __slots__ = ()
    name = "sqrt"


FUNCTIONS: dict[str, type[Call]] = {
    cls.name: cls for cls in (Sin, Cos, Tan, Exp, Log, Sqrt)
}

ZERO = Const(0.0)
ONE = Const(1.0)


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


class _Parser:
    def __init__(self, source: str, variables: Sequence[str]):
        self.src = source
        self.known = set(variables)
        self.pos = 0  # character index into src
        self.tok: tuple[str, str] | None = None
        self.tok_start = 0
        self._advance()

    def _byte_offset(self, char_index: int) -> int:
        return len(self.src[:char_index].encode("utf-8")) + 1

    def _error(self, message: str, expected: str):
        where = self.tok_start if self.tok is not None else len(self.src)
        raise ExprSyntaxError(message, self._byte_offset(where), expected)

    def _advance(self) -> None:
        src = self.src
        m = _TOKEN.match(src, self.pos)
        # skip trailing whitespace
        if m is None or m.end() == self.pos:
            rest = src[self.pos:]
            if rest.strip() == "":
                self.tok = None
                self.tok_start = len(src)
                self.pos = len(src)
                return
            start = self.pos + (len(rest) - len(rest.lstrip()))
            raise ExprSyntaxError(
                f"unexpected character {src[start]!r}",
                self._byte_offset(start),
                "number, identifier, operator or parenthesis",
            )
        kind = m.lastgroup
        if kind is None:
            # only whitespace matched
            self.tok = None
            self.tok_start = len(src)
            self.pos = len(src)
            return
        self.tok = (kind, m.group(kind))
        self.tok_start = m.start(kind)
        self.pos = m.end()

    def _accept(self, op: str) -> bool:
        if self.tok == ("op", op):
            self._advance()
            return True
        return False

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok is not None:
            self._error(f"unexpected token {self.tok[1]!r}", "operator or end of input")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok is not None and self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.tok[1]
            self._advance()
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.tok is not None and self.tok[0] == "op" and self.tok[1] in "*/":
            op = self.tok[1]
            self._advance()
            rhs = self.unary()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def unary(self) -> Expr:
        if self._accept("-"):
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self._accept("^"):
            return Pow(base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok is None:
            self._error("unexpected end of input", "number, identifier or '('")
        kind, text = tok
        if kind == "number":
            self._advance()
            return Const(float(text))
        if kind == "ident":
            start = self.tok_start
            self._advance()
            if self.tok == ("op", "("):
                fn = FUNCTIONS.get(text)
                if fn is None:
                    raise ExprSyntaxError(
                        f"unknown function {text!r}",
                        self._byte_offset(start),
                        "one of " + ", ".join(sorted(FUNCTIONS)),
                    )
                self._advance()
                arg = self.expr()
                if not self._accept(")"):
                    self._error("unclosed parenthesis", "')'")
                return fn(arg)
            if text not in self.known:
                raise UnknownVariable(text)
            return Var(text)
        if text == "(":
            self._advance()
            e = self.expr()
            if not self._accept(")"):
                self._error("unclosed parenthesis", "')'")
            return e
        self._error(f"unexpected token {text!r}", "number, identifier or '('")
        raise AssertionError("unreachable")


def parse(source: str, variables: Iterable[str]) -> Expr:
    """Parse ``source`` into an expression over the declared ``variables``."""
    names = list(variables)
    if len(set(names)) != len(names):
        raise ValueError("variable names must be distinct")
    return _Parser(source, names).parse()


def as_expr(value, variables: Iterable[str]) -> Expr:
    """Accept an Expr, a number or source text."""
    if isinstance(value, Expr):
        names = set(variables)
        for v in sorted(_free(value)):
            if v not in names:
                raise UnknownVariable(v)
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return Const(float(value))
    if isinstance(value, str):
        return parse(value, variables)
    raise TypeError(f"cannot interpret {value!r} as an expression")


# ---------------------------------------------------------------------------
# printing

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _fmt_const(v: float) -> str:
    if v < 0 or (v == 0 and math.copysign(1.0, v) < 0):
        return "(-" + _fmt_const(-v) + ")"
    s = repr(float(v))
    if s == "inf":
        return "1e999"
    return s


def to_string(e: Expr) -> str:
    """Render ``e`` as source text that parses back to an equivalent tree."""
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.name}({to_string(e.arg)})"
    if isinstance(e, Neg):
        return "-" + _wrap(e.arg)
    if isinstance(e, Pow):
        return _wrap(e.base) + "^" + _wrap(e.exponent)
    op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[type(e)]
    prec = _PREC[type(e)]
    left = to_string(e.left)
    if _PREC.get(type(e.left), 9) < prec:
        left = f"({left})"
    right = to_string(e.right)
    # left-associative: equal precedence on the right needs parentheses
    if _PREC.get(type(e.right), 9) <= prec:
        right = f"({right})"
    return f"{left} {op} {right}"


def _wrap(e: Expr) -> str:
    s = to_string(e)
    if isinstance(e, (Var, Call, Const)):
        return s
    return f"({s})"


# ---------------------------------------------------------------------------
# evaluation


def _int_exponent(k: float) -> int | None:
    if float(k).is_integer() and abs(k) <= MAX_EXPANDED_POWER:
        return int(k)
    return None


def _repeated_power(b, k: int):
    if k == 0:
        return 1.0
    r = b
    for _ in range(abs(k) - 1):
        r = r * b
    return r


def _ev(e: Expr, env: Mapping[str, float]) -> float:
    t = type(e)
    if t is Const:
        return e.value
    if t is Var:
        try:
            return float(env[e.name])
        except KeyError:
            raise EvalError(f"no value for variable {e.name!r}") from None
    if t is Add:
        r = _ev(e.left, env) + _ev(e.right, env)
    elif t is Sub:
        r = _ev(e.left, env) - _ev(e.right, env)
    elif t is Mul:
        r = _ev(e.left, env) * _ev(e.right, env)
    elif t is Div:
        num = _ev(e.left, env)
        den = _ev(e.right, env)
        if den == 0.0:
            raise EvalError("division by zero")
        r = num / den
    elif t is Neg:
        return -_ev(e.arg, env)
    elif t is Pow:
        b = _ev(e.base, env)
        k = _ev(e.exponent, env)
        ik = _int_exponent(k)
        if ik is not None:
            if ik < 0:
                if b == 0.0:
                    raise EvalError("division by zero")
                r = 1.0 / _repeated_power(b, -ik)
            else:
                r = _repeated_power(b, ik)
        elif float(k).is_integer():
            if b == 0.0 and k < 0:
                raise EvalError("division by zero")
            r = math.pow(b, k) if abs(k) < 2**53 else math.inf
        else:
            if b < 0.0 or (b == 0.0 and k <= 0.0):
                raise EvalError("non-integer power of a non-positive base")
            r = math.pow(b, k) if b > 0 else 0.0
    else:
        a = _ev(e.arg, env)
        if t is Sin:
            r = math.sin(a)
        elif t is Cos:
            r = math.cos(a)
        elif t is Tan:
            r = math.tan(a)
        elif t is Exp:
            r = math.exp(a) if a < 710.0 else math.inf
        elif t is Log:
            if a <= 0.0:
                raise EvalError("log of non-positive value")
            r = math.log(a)
        elif t is Sqrt:
            if a < 0.0:
                raise EvalError("sqrt of negative value")
            r = math.sqrt(a)
        else:
            raise TypeError(f"not an expression node: {e!r}")
    if not math.isfinite(r):
        raise EvalError("non-finite result")
    return r


def evaluate(e: Expr, assignment: Mapping[str, float]) -> float:
    """Evaluate ``e`` in IEEE double precision.

    Raises EvalError on division by zero, log of a non-positive value, sqrt of
    a negative value and any non-finite intermediate result.
    """
    return _ev(e, assignment)


def _ev_arr(e: Expr, env: Mapping[str, np.ndarray]):
    t = type(e)
    if t is Const:
        return e.value
    if t is Var:
        try:
            return env[e.name]
        except KeyError:
            raise EvalError(f"no value for variable {e.name!r}") from None
    if t is Add:
        return _ev_arr(e.left, env) + _ev_arr(e.right, env)
    if t is Sub:
        return _ev_arr(e.left, env) - _ev_arr(e.right, env)
    if t is Mul:
        return _ev_arr(e.left, env) * _ev_arr(e.right, env)
    if t is Div:
        den = _ev_arr(e.right, env)
        if np.any(np.asarray(den) == 0.0):
            raise EvalError("division by zero")
        return _ev_arr(e.left, env) / den
    if t is Neg:
        return -_ev_arr(e.arg, env)
    if t is Pow:
        b = _ev_arr(e.base, env)
        k = _ev_arr(e.exponent, env)
        if np.ndim(k) == 0:
            ik = _int_exponent(float(k))
            if ik is not None:
                if ik < 0:
                    if np.any(np.asarray(b) == 0.0):
                        raise EvalError("division by zero")
                    return 1.0 / _repeated_power(b, -ik)
                return _repeated_power(b, ik) if ik else np.ones_like(b, dtype=float)
            if float(k).is_integer():
                return np.power(b, float(k))
        b_arr, k_arr = np.broadcast_arrays(np.asarray(b, float), np.asarray(k, float))
        if np.any((b_arr < 0.0) | ((b_arr == 0.0) & (k_arr <= 0.0))):
            raise EvalError("non-integer power of a non-positive base")
        return np.power(b, k)
    a = _ev_arr(e.arg, env)
    if t is Sin:
        return np.sin(a)
    if t is Cos:
        return np.cos(a)
    if t is Tan:
        return np.tan(a)
    if t is Exp:
        with np.errstate(over="ignore"):
            return np.exp(a)
    if t is Log:
        if np.any(np.asarray(a) <= 0.0):
            raise EvalError("log of non-positive value")
        return np.log(a)
    if t is Sqrt:
        if np.any(np.asarray(a) < 0.0):
            raise EvalError("sqrt of negative value")
        return np.sqrt(a)
    raise TypeError(f"not an expression node: {e!r}")


def evaluate_array(e: Expr, env: Mapping[str, np.ndarray], shape=None) -> np.ndarray:
    """Vectorised evaluation over arrays of variable values.

    The result is broadcast to ``shape`` when given (constants otherwise come
    back as 0-d arrays).
    """
    with np.errstate(over="ignore", invalid="ignore"):
        r = np.asarray(_ev_arr(e, env), dtype=float)
    if not np.all(np.isfinite(r)):
        raise EvalError("non-finite result")
    if shape is not None and r.shape != tuple(shape):
        r = np.broadcast_to(r, shape).copy()
    return r


# ---------------------------------------------------------------------------
# simplifying constructors


def const(v: float) -> Const:
    return Const(float(v))


def is_zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0.0


def _is_one(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 1.0


def _fold(node: Expr) -> Expr:
    try:
        return Const(_ev(node, {}))
    except EvalError:
        return node


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a: Expr, b: Expr) -> Expr:
    if is_zero(a):
        return b
    if is_zero(b):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(Add(a, b))
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if is_zero(b):
        return a
    if is_zero(a):
        return neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(Sub(a, b))
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if is_zero(a) or is_zero(b):
        return ZERO
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(Mul(a, b))
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_one(b):
        return a
    if is_zero(a) and not is_zero(b):
        return ZERO
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(Div(a, b))
    return Div(a, b)


def power(a: Expr, k: Expr) -> Expr:
    if is_zero(k):
        return ONE
    if _is_one(k):
        return a
    if isinstance(a, Const) and isinstance(k, Const):
        return _fold(Pow(a, k))
    return Pow(a, k)


def call(name: str, a: Expr) -> Expr:
    node = FUNCTIONS[name](a)
    if isinstance(a, Const):
        return _fold(node)
    return node


def sum_exprs(terms: Iterable[Expr]) -> Expr:
    out: Expr = ZERO
    for t in terms:
        out = add(out, t)
    return out


# ---------------------------------------------------------------------------
# differentiation


def derivative(e: Expr, var: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to ``var``."""
    t = type(e)
    if t is Const:
        return ZERO
    if t is Var:
        return ONE if e.name == var else ZERO
    if t is Neg:
        return neg(derivative(e.arg, var))
    if t is Add:
        return add(derivative(e.left, var), derivative(e.right, var))
    if t is Sub:
        return sub(derivative(e.left, var), derivative(e.right, var))
    if t is Mul:
        dl = derivative(e.left, var)
        dr = derivative(e.right, var)
        return add(mul(dl, e.right), mul(e.left, dr))
    if t is Div:
        dl = derivative(e.left, var)
        dr = derivative(e.right, var)
        first = div(dl, e.right)
        if is_zero(dr):
            return first
        return sub(first, div(mul(e.left, dr), mul(e.right, e.right)))
    if t is Pow:
        db = derivative(e.base, var)
        dk = derivative(e.exponent, var)
        if is_zero(dk):
            if is_zero(db):
                return ZERO
            if isinstance(e.exponent, Const):
                lowered = power(e.base, Const(e.exponent.value - 1.0))
            else:
                lowered = power(e.base, sub(e.exponent, ONE))
            return mul(mul(e.exponent, lowered), db)
        # general case: d(b^k) = b^k (k' log b + k b'/b)
        inner = mul(dk, call("log", e.base))
        if not is_zero(db):
            inner = add(inner, div(mul(e.exponent, db), e.base))
        return mul(e, inner)
    da = derivative(e.arg, var)
    if is_zero(da):
        return ZERO
    a = e.arg
    if t is Sin:
        return mul(call("cos", a), da)
    if t is Cos:
        return neg(mul(call("sin", a), da))
    if t is Tan:
        c = call("cos", a)
        return div(da, mul(c, c))
    if t is Exp:
        return mul(e, da)
    if t is Log:
        return div(da, a)
    if t is Sqrt:
        return div(da, mul(Const(2.0), e))
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# utilities


def _free(e: Expr, acc: set | None = None) -> set:
    acc = set() if acc is None else acc
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Var):
            acc.add(n.name)
        elif isinstance(n, (Neg, Call)):
            stack.append(n.arg)
        elif isinstance(n, Pow):
            stack.extend((n.base, n.exponent))
        elif isinstance(n, (Add, Sub, Mul, Div)):
            stack.extend((n.left, n.right))
    return acc


def variables(e: Expr) -> frozenset[str]:
    return frozenset(_free(e))


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (no simplification)."""
    t = type(e)
    if t is Const:
        return e
    if t is Var:
        return mapping.get(e.name, e)
    if t is Neg:
        return Neg(substitute(e.arg, mapping))
    if t is Pow:
        return Pow(substitute(e.base, mapping), substitute(e.exponent, mapping))
    if t in (Add, Sub, Mul, Div):
        return t(substitute(e.left, mapping), substitute(e.right, mapping))
    return t(substitute(e.arg, mapping))



def eval_table(table, env: Mapping[str, np.ndarray], size: int) -> np.ndarray:
    """Evaluate a nested list (or object array) of Exprs over ``size`` points.

    Returns an array of shape ``(size, *table_shape)``.
    """
    arr = np.asarray(table, dtype=object)
    out = np.empty((size,) + arr.shape)
    for idx in np.ndindex(*arr.shape):
        e = arr[idx]
        if isinstance(e, Const):
            out[(slice(None),) + idx] = e.value
        else:
            out[(slice(None),) + idx] = evaluate_array(e, env, (size,))
    return out
