"""Scalar expressions of one real variable ``x``.

Grammar (prefix functions, standard infix precedence ``^`` > unary ``-``
> ``*`` ``/`` > ``+`` ``-``)::

    expr    := term (('+'|'-') term)*
    term    := factor (('*'|'/') factor)*
    factor  := '-' factor | power
    power   := atom ['^' ['-'] INT]
    atom    := NUMBER | 'x' | NAME '(' expr [',' expr] ')' | '(' expr ')'

Unary functions: ``abs``, ``exp``, ``log``, ``sqrt``, ``pos`` (positive
part), ``negpart`` (negative part).  Binary functions: ``min``, ``max``.
Exponents are integer literals so that symbolic differentiation stays
exact on the smooth subset (no ``abs``/``pos``/``negpart``/``min``/``max``).

ASTs are immutable; evaluation accepts a float or a numpy array and
raises :class:`EvalDomainError` on division by zero, ``log`` of a
non-positive value or ``sqrt`` of a negative value instead of emitting
NaN.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

Real = Union[float, np.ndarray]


class ExprError(ValueError):
    """Base class for expression errors."""


class ParseError(ExprError):
    """Malformed source text; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class EvalDomainError(ExprError):
    """Evaluation left the mathematical domain of the expression."""


class SmoothnessError(ExprError):
    """Symbolic differentiation hit a non-smooth node."""


def _any(mask) -> bool:
    return bool(np.any(mask))


@dataclass(frozen=True)
class Node:
    """Base AST node."""

    def eval(self, x: Real) -> Real:
        raise NotImplementedError

    def deriv(self) -> "Node":
        raise NotImplementedError

    def __str__(self) -> str:
        return self._fmt()

    def _fmt(self) -> str:
        raise NotImplementedError

    # Precedence used when printing: higher binds tighter.
    _prec = 5


@dataclass(frozen=True)
class Const(Node):
    value: float

    @property
    def _prec(self):
        # a literal printing with a leading minus (including -0.0) binds
        # like Neg, so it is parenthesized where Neg would be
        return 3 if repr(float(self.value)).startswith("-") else 5

    def eval(self, x):
        if isinstance(x, np.ndarray):
            return np.full_like(x, self.value, dtype=float)
        return float(self.value)

    def deriv(self):
        return Const(0.0)

    def _fmt(self):
        return repr(float(self.value))


@dataclass(frozen=True)
class Var(Node):
    def eval(self, x):
        if isinstance(x, np.ndarray):
            return x.astype(float, copy=True)
        return float(x)

    def deriv(self):
        return Const(1.0)

    def _fmt(self):
        return "x"


@dataclass(frozen=True)
class Neg(Node):
    child: Node
    _prec = 3

    def eval(self, x):
        return -self.child.eval(x)

    def deriv(self):
        return Neg(self.child.deriv())

    def _fmt(self):
        return "-" + _wrap(self.child, 4)


@dataclass(frozen=True)
class BinOp(Node):
    op: str  # one of + - * /
    left: Node
    right: Node

    @property
    def _prec(self):
        return 1 if self.op in "+-" else 2

    def eval(self, x):
        a = self.left.eval(x)
        b = self.right.eval(x)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if _any(b == 0):
            raise EvalDomainError("division by zero")
        return a / b

    def deriv(self):
        u, v = self.left, self.right
        du, dv = u.deriv(), v.deriv()
        if self.op in "+-":
            return BinOp(self.op, du, dv)
        if self.op == "*":
            return BinOp("+", BinOp("*", du, v), BinOp("*", u, dv))
        num = BinOp("-", BinOp("*", du, v), BinOp("*", u, dv))
        return BinOp("/", num, Pow(v, 2))

    def _fmt(self):
        p = self._prec
        left = _wrap(self.left, p)
        # - and / do not associate to the right
        right = _wrap(self.right, p + 1 if self.op in "-/" else p)
        return f"{left} {self.op} {right}"


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: int
    _prec = 4

    def eval(self, x):
        b = self.base.eval(x)
        if self.exponent < 0 and _any(b == 0):
            raise EvalDomainError("zero raised to a negative power")
        with np.errstate(over="ignore"):
            return b ** self.exponent

    def deriv(self):
        n = self.exponent
        if n == 0:
            return Const(0.0)
        inner = Pow(self.base, n - 1) if n != 1 else Const(1.0)
        return BinOp("*", Const(float(n)), BinOp("*", inner, self.base.deriv()))

    def _fmt(self):
        return f"{_wrap(self.base, 5)}^{self.exponent}"


_UNARY_FUNCS = ("abs", "exp", "log", "sqrt", "pos", "negpart")
_BINARY_FUNCS = ("min", "max")


@dataclass(frozen=True)
class Func(Node):
    name: str
    arg: Node

    def eval(self, x):
        v = self.arg.eval(x)
        if self.name == "abs":
            return np.abs(v) if isinstance(v, np.ndarray) else abs(v)
        if self.name == "exp":
            with np.errstate(over="ignore"):
                out = np.exp(v)
            return out if isinstance(v, np.ndarray) else float(out)
        if self.name == "log":
            if _any(v <= 0):
                raise EvalDomainError("log of a non-positive value")
            out = np.log(v)
            return out if isinstance(v, np.ndarray) else float(out)
        if self.name == "sqrt":
            if _any(v < 0):
                raise EvalDomainError("sqrt of a negative value")
            out = np.sqrt(v)
            return out if isinstance(v, np.ndarray) else float(out)
        if self.name == "pos":
            return np.maximum(v, 0.0) if isinstance(v, np.ndarray) else max(v, 0.0)
        # negative part, always >= 0
        return np.maximum(-v, 0.0) if isinstance(v, np.ndarray) else max(-v, 0.0)

    def deriv(self):
        u, du = self.arg, self.arg.deriv()
        if self.name == "exp":
            return BinOp("*", Func("exp", u), du)
        if self.name == "log":
            return BinOp("/", du, u)
        if self.name == "sqrt":
            return BinOp("/", du, BinOp("*", Const(2.0), Func("sqrt", u)))
        raise SmoothnessError(f"{self.name} is not differentiable symbolically")

    def _fmt(self):
        return f"{self.name}({self.arg})"


@dataclass(frozen=True)
class MinMax(Node):
    name: str  # min or max
    left: Node
    right: Node

    def eval(self, x):
        a = self.left.eval(x)
        b = self.right.eval(x)
        fn = np.minimum if self.name == "min" else np.maximum
        if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
            return fn(a, b)
        return float(fn(a, b))

    def deriv(self):
        raise SmoothnessError(f"{self.name} is not differentiable symbolically")

    def _fmt(self):
        return f"{self.name}({self.left}, {self.right})"


def _wrap(node: Node, min_prec: int) -> str:
    s = node._fmt()
    if node._prec < min_prec:
        return f"({s})"
    return s


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?"
    r"|\d+(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(src: str):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            stripped = src[pos:].lstrip()
            if not stripped:
                break
            raise ParseError(f"unexpected character {stripped[0]!r}",
                             len(src) - len(stripped))
        if m.lastgroup == "num":
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.lastgroup == "name":
            tokens.append(("name", m.group("name"), m.start("name")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, text, off = self.next()
        if kind != "op" or text != op:
            raise ParseError(f"expected {op!r}, got {text!r}", off)

    def parse(self) -> Node:
        node = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", off)
        return node

    def expr(self) -> Node:
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.next()
                node = BinOp(text, node, self.term())
            else:
                return node

    def term(self) -> Node:
        node = self.factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.next()
                node = BinOp(text, node, self.factor())
            else:
                return node

    def factor(self) -> Node:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.next()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.next()
            base = Pow(base, self.integer())
        return base

    def integer(self) -> int:
        sign = 1
        kind, text, off = self.next()
        if kind == "op" and text == "-":
            sign = -1
            kind, text, off = self.next()
        if kind != "num" or any(c in text for c in ".eE"):
            raise ParseError("exponent must be an integer literal", off)
        return sign * int(text)

    def atom(self) -> Node:
        kind, text, off = self.next()
        if kind == "num":
            return Const(float(text))
        if kind == "name":
            if text == "x":
                return Var()
            if text in _UNARY_FUNCS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Func(text, arg)
            if text in _BINARY_FUNCS:
                self.expect_op("(")
                left = self.expr()
                self.expect_op(",")
                right = self.expr()
                self.expect_op(")")
                return MinMax(text, left, right)
            raise ParseError(f"unknown identifier {text!r}", off)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ParseError(f"unexpected token {text!r}", off)


def parse(src: str) -> Node:
    """Parse ``src`` into an immutable AST."""
    return _Parser(src).parse()


def evaluate(ast: Node, x: Real) -> Real:
    """Evaluate ``ast`` at ``x`` (float or numpy array)."""
    return ast.eval(x)


def deriv(ast: Node, order: int = 1) -> Node:
    """Symbolic derivative of ``order`` in {1, 2} on the smooth subset."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    out = ast.deriv()
    if order == 2:
        out = out.deriv()
    return out


def as_expr(f) -> Node:
    """Coerce a string or AST to an AST (convenience for APIs)."""
    if isinstance(f, Node):
        return f
    if isinstance(f, str):
        return parse(f)
    raise TypeError(f"expected expression string or AST, got {type(f).__name__}")
