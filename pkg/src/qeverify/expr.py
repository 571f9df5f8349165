"""Scalar expression grammar used by geometry files and the built-in catalog.

Grammar (standard precedence, ``+ - * /`` left-associative, ``^`` right-associative,
unary minus binds looser than ``^`` so ``-x^2 == -(x^2)``)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Names are coordinates, declared parameters or the constant ``pi``. Supported
functions: sin cos sinh cosh exp log sqrt.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np

FUNCTIONS = ("sin", "cos", "sinh", "cosh", "exp", "log", "sqrt")
CONSTANTS = {"pi": math.pi}


class ExprSyntaxError(ValueError):
    """Malformed expression; carries a 1-based line and column."""

    def __init__(self, message: str, line: int = 1, col: int = 1):
        super().__init__(f"line {line}, column {col}: {message}")
        self.message = message
        self.line = line
        self.col = col


class UndeclaredNameError(ValueError):
    def __init__(self, name: str, line: int = 1, col: int = 1):
        super().__init__(f"line {line}, column {col}: undeclared parameter or coordinate {name!r}")
        self.name = name
        self.line = line
        self.col = col


# --------------------------------------------------------------------------- AST


class Node:
    __slots__ = ()


@dataclass(frozen=True)
class Num(Node):
    value: float


@dataclass(frozen=True)
class Sym(Node):
    name: str


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Call(Node):
    func: str
    arg: Node


ZERO = Num(0.0)
ONE = Num(1.0)


def is_num(node: Node, value: float | None = None) -> bool:
    return isinstance(node, Num) and (value is None or node.value == value)


def names(node: Node) -> set[str]:
    if isinstance(node, Sym):
        return {node.name}
    if isinstance(node, Neg):
        return names(node.arg)
    if isinstance(node, Call):
        return names(node.arg)
    if isinstance(node, BinOp):
        return names(node.left) | names(node.right)
    return set()


# ------------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    col: int


def tokenize(text: str, line: int = 1, col0: int = 1) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", line, col0 + pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), col0 + pos))
        pos = m.end()
    tokens.append(Token("end", "", col0 + len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, line: int, col0: int, allowed: set[str] | None):
        self.tokens = tokenize(text, line, col0)
        self.i = 0
        self.line = line
        self.allowed = allowed

    def peek(self) -> Token:
        return self.tokens[self.i]

    def take(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.take()
        if tok.text != text:
            found = tok.text or "end of expression"
            raise ExprSyntaxError(f"expected {text!r}, found {found!r}", self.line, tok.col)
        return tok

    def parse(self) -> Node:
        if self.peek().kind == "end":
            raise ExprSyntaxError("empty expression", self.line, self.peek().col)
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(f"unexpected token {tok.text!r}", self.line, tok.col)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.take().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        tok = self.peek()
        if tok.text == "-":
            self.take()
            return Neg(self.unary())
        if tok.text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek().text == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        tok = self.take()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "name":
            if self.peek().text == "(":
                if tok.text not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {tok.text!r}", self.line, tok.col)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(tok.text, arg)
            if tok.text in FUNCTIONS:
                raise ExprSyntaxError(f"function {tok.text!r} needs an argument", self.line, tok.col)
            if self.allowed is not None and tok.text not in self.allowed and tok.text not in CONSTANTS:
                raise UndeclaredNameError(tok.text, self.line, tok.col)
            return Sym(tok.text)
        if tok.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = tok.text or "end of expression"
        raise ExprSyntaxError(f"unexpected {found!r}", self.line, tok.col)


def parse(text: str, allowed: Iterable[str] | None = None, line: int = 1, col: int = 1) -> Node:
    """Parse ``text`` into an AST; ``allowed`` restricts free names."""
    return _Parser(text, line, col, set(allowed) if allowed is not None else None).parse()


# ------------------------------------------------------------------ emission

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    if isinstance(node, Num) and node.value < 0:
        return _PREC["neg"]
    return 5


def _fmt_num(value: float) -> str:
    value = float(value)
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def emit(node: Node) -> str:
    """Render ``node`` with the minimal parentheses that reparse to the same tree."""
    if isinstance(node, Num):
        if node.value < 0:
            return f"(-{_fmt_num(-node.value)})"
        return _fmt_num(node.value)
    if isinstance(node, Sym):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({emit(node.arg)})"
    if isinstance(node, Neg):
        inner = emit(node.arg)
        if _prec(node.arg) < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    p = _PREC[node.op]
    left, right = emit(node.left), emit(node.right)
    if node.op == "^":
        if _prec(node.left) <= p:
            left = f"({left})"
        if _prec(node.right) < _PREC["neg"]:
            right = f"({right})"
    else:
        if _prec(node.left) < p:
            left = f"({left})"
        if _prec(node.right) <= p:
            right = f"({right})"
    return f"{left}{node.op}{right}"


# ----------------------------------------------------- simplifying constructors


def add(a: Node, b: Node) -> Node:
    if is_num(a, 0.0):
        return b
    if is_num(b, 0.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return BinOp("+", a, b)


def sub(a: Node, b: Node) -> Node:
    if is_num(b, 0.0):
        return a
    if is_num(a, 0.0):
        return neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    return BinOp("-", a, b)


def mul(a: Node, b: Node) -> Node:
    if is_num(a, 0.0) or is_num(b, 0.0):
        return ZERO
    if is_num(a, 1.0):
        return b
    if is_num(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return BinOp("*", a, b)


def div(a: Node, b: Node) -> Node:
    if is_num(a, 0.0):
        return ZERO
    if is_num(b, 1.0):
        return a
    return BinOp("/", a, b)


def pow_(a: Node, b: Node) -> Node:
    if is_num(b, 1.0):
        return a
    if is_num(b, 0.0):
        return ONE
    return BinOp("^", a, b)


def neg(a: Node) -> Node:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def call(func: str, a: Node) -> Node:
    return Call(func, a)


# -------------------------------------------------------------- differentiation


def diff(node: Node, var: str) -> Node:
    """Symbolic partial derivative of ``node`` with respect to the name ``var``."""
    if isinstance(node, Num):
        return ZERO
    if isinstance(node, Sym):
        return ONE if node.name == var else ZERO
    if isinstance(node, Neg):
        return neg(diff(node.arg, var))
    if isinstance(node, Call):
        u = node.arg
        du = diff(u, var)
        if is_num(du, 0.0):
            return ZERO
        f = node.func
        if f == "sin":
            outer = call("cos", u)
        elif f == "cos":
            outer = neg(call("sin", u))
        elif f == "sinh":
            outer = call("cosh", u)
        elif f == "cosh":
            outer = call("sinh", u)
        elif f == "exp":
            outer = node
        elif f == "log":
            return div(du, u)
        elif f == "sqrt":
            return div(du, mul(Num(2.0), node))
        else:  # pragma: no cover - parser rejects unknown functions
            raise ValueError(f)
        return mul(outer, du)
    a, b = node.left, node.right
    da, db = diff(a, var), diff(b, var)
    if node.op == "+":
        return add(da, db)
    if node.op == "-":
        return sub(da, db)
    if node.op == "*":
        return add(mul(da, b), mul(a, db))
    if node.op == "/":
        if is_num(db, 0.0):
            return div(da, b)
        return div(sub(mul(da, b), mul(a, db)), pow_(b, Num(2.0)))
    # power
    if var not in names(b):
        if is_num(da, 0.0):
            return ZERO
        if isinstance(b, Num):
            return mul(mul(b, pow_(a, Num(b.value - 1.0))), da)
        return mul(mul(b, pow_(a, sub(b, ONE))), da)
    # a^b = exp(b log a)
    term = mul(db, call("log", a))
    if not is_num(da, 0.0):
        term = add(term, div(mul(b, da), a))
    return mul(node, term)


# ------------------------------------------------------------------ evaluation

_NP_FUNCS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
}


def substitute(node: Node, values: Mapping[str, float]) -> Node:
    """Replace named symbols by numeric constants (parameters, ``pi``)."""
    if isinstance(node, Sym):
        if node.name in values:
            return Num(float(values[node.name]))
        return node
    if isinstance(node, Neg):
        return neg(substitute(node.arg, values))
    if isinstance(node, Call):
        return Call(node.func, substitute(node.arg, values))
    if isinstance(node, BinOp):
        return BinOp(node.op, substitute(node.left, values), substitute(node.right, values))
    return node


def evaluate_constant(node: Node, values: Mapping[str, float] | None = None) -> float:
    env = dict(CONSTANTS)
    if values:
        env.update(values)
    fn = compile_expr(node, (), env)
    return float(fn(np.zeros((1, 0)))[0])


def compile_expr(node: Node, coords: tuple[str, ...], params: Mapping[str, float]) -> Callable:
    """Compile to ``f(points) -> (N,) array`` over a batch of chart points."""
    env = dict(CONSTANTS)
    env.update(params)
    index = {name: i for i, name in enumerate(coords)}

    def build(n: Node) -> Callable:
        if isinstance(n, Num):
            v = n.value
            return lambda P: v
        if isinstance(n, Sym):
            if n.name in index:
                i = index[n.name]
                return lambda P: P[:, i]
            if n.name in env:
                v = float(env[n.name])
                return lambda P: v
            raise UndeclaredNameError(n.name)
        if isinstance(n, Neg):
            f = build(n.arg)
            return lambda P: -f(P)
        if isinstance(n, Call):
            f = build(n.arg)
            g = _NP_FUNCS[n.func]
            return lambda P: g(f(P))
        fl, fr = build(n.left), build(n.right)
        if n.op == "+":
            return lambda P: fl(P) + fr(P)
        if n.op == "-":
            return lambda P: fl(P) - fr(P)
        if n.op == "*":
            return lambda P: fl(P) * fr(P)
        if n.op == "/":
            return lambda P: fl(P) / fr(P)
        if isinstance(n.right, Num) and n.right.value == 2.0:
            return lambda P: fl(P) * fl(P)
        return lambda P: np.power(fl(P), fr(P))

    inner = build(node)

    def fn(points: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            out = inner(points)
        # keep extended precision when the caller asks for it (finite-difference sampling)
        dtype = points.dtype if points.dtype == np.longdouble else float
        return np.broadcast_to(np.asarray(out, dtype=dtype), (points.shape[0],))

    return fn
