"""Scalar expressions over complex coordinates z1..zn.

The grammar is closed: numeric literals, the imaginary unit ``I``, ``pi``,
variables ``z1..zn``, real named parameters, the binary operators
``+ - * /``, unary minus, integer powers (``pow(e, k)`` or ``e^k``) and the
functions ``conj re im abs2 exp log sqrt sin cos ramp``.

``ramp(t) = max(Re t, 0)`` is the only non-analytic primitive; it exists so
that flat cutoffs such as ``pow(ramp(s - c), 4)`` (C^3) can be written.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, ExprError, ParseError

UNARY_FUNCS = ("conj", "re", "im", "abs2", "exp", "log", "sqrt", "sin", "cos", "ramp")
BINARY_OPS = ("add", "sub", "mul", "div")
_OP_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/"}
# nodes that break holomorphy when applied to a z-dependent argument
NON_HOLOMORPHIC = frozenset({"conj", "re", "im", "abs2", "ramp"})


class Node:
    __slots__ = ()


@dataclass(frozen=True, eq=True)
class Num(Node):
    value: float


@dataclass(frozen=True, eq=True)
class Imag(Node):
    pass


@dataclass(frozen=True, eq=True)
class Var(Node):
    index: int  # 1-based


@dataclass(frozen=True, eq=True)
class Param(Node):
    name: str


@dataclass(frozen=True, eq=True)
class Unary(Node):
    op: str  # "neg" or one of UNARY_FUNCS
    arg: Node


@dataclass(frozen=True, eq=True)
class Binary(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True, eq=True)
class Pow(Node):
    base: Node
    k: int


# ---------------------------------------------------------------- tokenizer

def _tokenize(src: str):
    tokens = []
    i = 0
    while i < len(src):
        c = src[i]
        if c.isspace():
            i += 1
        elif c.isdigit() or (c == "." and i + 1 < len(src) and src[i + 1].isdigit()):
            j = i
            while j < len(src) and (src[j].isdigit() or src[j] == "."):
                j += 1
            if j < len(src) and src[j] in "eE":
                k = j + 1
                if k < len(src) and src[k] in "+-":
                    k += 1
                if k < len(src) and src[k].isdigit():
                    j = k
                    while j < len(src) and src[j].isdigit():
                        j += 1
            text = src[i:j]
            try:
                float(text)
            except ValueError:
                raise ParseError(f"malformed number {text!r}", _offset(src, i)) from None
            tokens.append(("num", text, i))
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < len(src) and (src[j].isalnum() or src[j] == "_"):
                j += 1
            tokens.append(("id", src[i:j], i))
            i = j
        elif c in "+-*/^(),":
            tokens.append((c, c, i))
            i += 1
        else:
            raise ParseError(f"unexpected character {c!r}", _offset(src, i))
    tokens.append(("eof", "", len(src)))
    return tokens


def _offset(src: str, i: int) -> int:
    return len(src[:i].encode("utf-8"))


class _Parser:
    def __init__(self, src: str, n: int, params: frozenset[str] | None):
        self.src = src
        self.n = n
        self.params = params
        self.toks = _tokenize(src)
        self.pos = 0

    def peek(self):
        return self.toks[self.pos]

    def take(self, kind=None):
        tok = self.toks[self.pos]
        if kind is not None and tok[0] != kind:
            want = "end of input" if kind == "eof" else repr(kind)
            got = "end of input" if tok[0] == "eof" else repr(tok[1])
            raise ParseError(f"expected {want}, got {got}", _offset(self.src, tok[2]))
        self.pos += 1
        return tok

    def parse(self) -> Node:
        node = self.expr()
        self.take("eof")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[0] in ("+", "-"):
            op = "add" if self.take()[0] == "+" else "sub"
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek()[0] in ("*", "/"):
            op = "mul" if self.take()[0] == "*" else "div"
            node = Binary(op, node, self.factor())
        return node

    def factor(self) -> Node:
        kind = self.peek()[0]
        if kind == "-":
            self.take()
            return Unary("neg", self.factor())
        if kind == "+":
            self.take()
            return self.factor()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[0] == "^":
            self.take()
            base = Pow(base, self.integer())
        return base

    def integer(self) -> int:
        sign = 1
        if self.peek()[0] in ("-", "+"):
            sign = -1 if self.take()[0] == "-" else 1
        tok = self.take("num")
        text = tok[1]
        if not text.isdigit():
            raise ParseError(f"power exponent must be an integer, got {text!r}",
                             _offset(self.src, tok[2]))
        return sign * int(text)

    def atom(self) -> Node:
        tok = self.take()
        kind, text, at = tok
        if kind == "num":
            return Num(float(text))
        if kind == "(":
            node = self.expr()
            self.take(")")
            return node
        if kind != "id":
            got = "end of input" if kind == "eof" else repr(text)
            raise ParseError(f"unexpected {got}", _offset(self.src, at))
        if self.peek()[0] == "(":
            return self.call(text, at)
        if text == "I":
            return Imag()
        if text == "pi":
            return Num(math.pi)
        if text[0] == "z" and text[1:].isdigit():
            idx = int(text[1:])
            if idx < 1 or idx > self.n:
                raise ParseError(f"variable {text} exceeds dimension {self.n}",
                                 _offset(self.src, at))
            return Var(idx)
        if self.params is not None and text not in self.params:
            raise ParseError(f"unknown identifier {text!r}", _offset(self.src, at))
        if text in UNARY_FUNCS or text == "pow":
            raise ParseError(f"function {text!r} used without arguments",
                             _offset(self.src, at))
        return Param(text)

    def call(self, name: str, at: int) -> Node:
        self.take("(")
        if name == "pow":
            base = self.expr()
            self.take(",")
            k = self.integer()
            self.take(")")
            return Pow(base, k)
        if name not in UNARY_FUNCS:
            raise ParseError(f"unknown function {name!r}", _offset(self.src, at))
        arg = self.expr()
        self.take(")")
        return Unary(name, arg)


# ------------------------------------------------------------------ Expr


@dataclass(frozen=True)
class Expr:
    """A parsed expression in ``n`` complex variables."""

    root: Node
    n: int

    def __str__(self) -> str:
        return to_source(self.root)

    def eval(self, z, params: Mapping[str, float] | None = None):
        return eval_expr(self, z, params)

    @property
    def param_names(self) -> frozenset[str]:
        return frozenset(p.name for p in walk(self.root) if isinstance(p, Param))

    def size(self) -> int:
        return tree_size(self.root)


def parse(source: str, n: int, params: Sequence[str] | None = None) -> Expr:
    """Parse ``source`` as an expression in ``z1..zn``.

    If ``params`` is given, any identifier that is not a variable, keyword or
    listed parameter is rejected; otherwise free identifiers become parameters.
    """
    if n < 1:
        raise ExprError("dimension must be >= 1")
    allowed = None if params is None else frozenset(params)
    return Expr(_Parser(source, n, allowed).parse(), n)


def to_source(node: Node) -> str:
    """Fully parenthesised source text; ``parse(to_source(e))`` rebuilds ``e``."""
    if isinstance(node, Num):
        if node.value < 0:
            return f"(-{repr(-node.value)})"
        return repr(float(node.value))
    if isinstance(node, Imag):
        return "I"
    if isinstance(node, Var):
        return f"z{node.index}"
    if isinstance(node, Param):
        return node.name
    if isinstance(node, Unary):
        if node.op == "neg":
            return f"(-{to_source(node.arg)})"
        return f"{node.op}({to_source(node.arg)})"
    if isinstance(node, Binary):
        return f"({to_source(node.left)} {_OP_SYMBOL[node.op]} {to_source(node.right)})"
    if isinstance(node, Pow):
        return f"pow({to_source(node.base)}, {node.k})"
    raise ExprError(f"unknown node {node!r}")


def walk(node: Node):
    seen = set()
    stack = [node]
    while stack:
        cur = stack.pop()
        if id(cur) in seen:
            continue
        seen.add(id(cur))
        yield cur
        stack.extend(children(cur))


def children(node: Node) -> tuple[Node, ...]:
    if isinstance(node, Unary):
        return (node.arg,)
    if isinstance(node, Binary):
        return (node.left, node.right)
    if isinstance(node, Pow):
        return (node.base,)
    return ()


def tree_size(node: Node) -> int:
    """Number of nodes with shared subtrees counted once."""
    return sum(1 for _ in walk(node))


def max_var_index(node: Node) -> int:
    return max((v.index for v in walk(node) if isinstance(v, Var)), default=0)


def depends_on_z(node: Node) -> bool:
    return any(isinstance(v, Var) for v in walk(node))


def substitute(e: Expr, components: Sequence[Expr], limit: int = 200_000) -> Expr:
    """Replace every ``z_j`` of ``e`` by ``components[j-1]`` (shared, not copied)."""
    if len(components) < max_var_index(e.root):
        raise ExprError("not enough components for substitution")
    n_new = components[0].n
    memo: dict[int, Node] = {}

    def go(node: Node) -> Node:
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, Var):
            out = components[node.index - 1].root
        elif isinstance(node, Unary):
            out = Unary(node.op, go(node.arg))
        elif isinstance(node, Binary):
            out = Binary(node.op, go(node.left), go(node.right))
        elif isinstance(node, Pow):
            out = Pow(go(node.base), node.k)
        else:
            out = node
        memo[key] = out
        return out

    out = Expr(go(e.root), n_new)
    if out.size() > limit:
        raise ExprError(f"composed expression has {out.size()} nodes (limit {limit})")
    return out


# ------------------------------------------------------------- evaluation


def _as_points(z, n: int) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    if z.shape[-1] != n:
        raise ExprError(f"point has {z.shape[-1]} coordinates, expected {n}")
    return z


def bind_params(e: Expr, params: Mapping[str, float] | None) -> dict[str, float]:
    params = dict(params or {})
    missing = e.param_names - params.keys()
    if missing:
        raise ExprError(f"unbound parameters: {sorted(missing)}")
    for name, val in params.items():
        if isinstance(val, complex) or not np.isfinite(val):
            raise ExprError(f"parameter {name} must be a finite real number")
    return params


def eval_expr(e: Expr, z, params: Mapping[str, float] | None = None, *, strict: bool = True):
    """Evaluate ``e`` at ``z`` (shape ``(..., n)``); returns a complex array of shape ``(...)``.

    With ``strict=False`` returns ``(value, bad)`` where ``bad`` marks points at
    which a log/sqrt/division argument left its domain.
    """
    z = _as_points(z, e.n)
    p = bind_params(e, params)
    shape = z.shape[:-1]
    bad = np.zeros(shape, dtype=bool)
    memo: dict[int, np.ndarray] = {}

    def go(node: Node):
        nonlocal bad
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, Num):
            out = np.full(shape, complex(node.value))
        elif isinstance(node, Imag):
            out = np.full(shape, 1j)
        elif isinstance(node, Var):
            out = z[..., node.index - 1]
        elif isinstance(node, Param):
            out = np.full(shape, complex(p[node.name]))
        elif isinstance(node, Unary):
            a = go(node.arg)
            op = node.op
            if op == "neg":
                out = -a
            elif op == "conj":
                out = np.conj(a)
            elif op == "re":
                out = a.real + 0j
            elif op == "im":
                out = a.imag + 0j
            elif op == "abs2":
                out = (a.real**2 + a.imag**2) + 0j
            elif op == "exp":
                out = np.exp(a)
            elif op in ("log", "sqrt"):
                viol = ~(a.real > 0)
                bad = bad | viol
                safe = np.where(viol, 1.0 + 0j, a)
                out = np.log(safe) if op == "log" else np.sqrt(safe)
            elif op == "sin":
                out = np.sin(a)
            elif op == "cos":
                out = np.cos(a)
            elif op == "ramp":
                out = np.maximum(a.real, 0.0) + 0j
            else:
                raise ExprError(f"unknown function {op}")
        elif isinstance(node, Binary):
            a, b = go(node.left), go(node.right)
            if node.op == "add":
                out = a + b
            elif node.op == "sub":
                out = a - b
            elif node.op == "mul":
                out = a * b
            else:
                viol = b == 0
                bad = bad | viol
                out = a / np.where(viol, 1.0 + 0j, b)
        elif isinstance(node, Pow):
            a = go(node.base)
            if node.k < 0:
                viol = a == 0
                bad = bad | viol
                a = np.where(viol, 1.0 + 0j, a)
            out = a ** node.k
        else:
            raise ExprError(f"unknown node {node!r}")
        memo[key] = out
        return out

    with np.errstate(over="ignore", invalid="ignore"):
        value = np.asarray(go(e.root), dtype=complex)
    if strict:
        if bad.any():
            raise DomainError("log/sqrt argument with nonpositive real part or division by zero")
        if not np.all(np.isfinite(value)):
            raise DomainError("evaluation overflowed")
        return value
    return value, bad | ~np.isfinite(value)


def validate_real(e: Expr, bbox, params=None, samples: int = 1000, seed: int = 0) -> float:
    """Largest ``|Im e|`` over quasi-random points of ``bbox`` (points outside the domain of
    smoothness are skipped)."""
    from scipy.stats import qmc

    bbox = np.asarray(bbox, dtype=float)
    if bbox.ndim != 2 or bbox.shape[1] != 2 or np.any(bbox[:, 1] <= bbox[:, 0]):
        raise ExprError("bbox must be nonempty")
    d = bbox.shape[0]
    x = qmc.Halton(d=d, seed=seed).random(samples)
    x = bbox[:, 0] + x * (bbox[:, 1] - bbox[:, 0])
    z = x[:, 0::2] + 1j * x[:, 1::2]
    val, bad = eval_expr(e, z, params, strict=False)
    ok = ~bad
    if not ok.any():
        return 0.0
    return float(np.max(np.abs(val[ok].imag)))
