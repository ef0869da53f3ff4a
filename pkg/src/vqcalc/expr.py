"""Arithmetic expressions over ``x1..xm`` compiled to vectorized callables.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("+" | "-") unary | power
    power  := atom ("^" unary)?            right-associative
    atom   := number | "pi" | x<i> | func "(" expr ("," expr)* ")" | "(" expr ")"

Functions: ``sin cos log exp sqrt`` (one argument) and ``pow`` (two).
Out-of-domain operations (log of a non-positive number, division by zero,
overflow, ...) make the whole value ``+inf`` so an optimizer simply rejects
the point.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)
_VAR = re.compile(r"x([1-9]\d*)$")


class ExpressionError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


def _finite(v):
    return np.where(np.isfinite(v), v, np.nan)


def _log(v):
    return np.log(np.where(v > 0, v, np.nan))


def _sqrt(v):
    return np.sqrt(np.where(v >= 0, v, np.nan))


def _div(a, b):
    return a / np.where(b != 0, b, np.nan)


def _pow(a, b):
    return np.power(a, b)


UNARY = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "log": _log, "sqrt": _sqrt}
BINARY = {"pow": _pow}

Node = Callable[[np.ndarray], np.ndarray]


def _tokenize(text: str) -> List[Tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionError(f"unexpected character {text[start]!r}", start)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0
        self.max_var = 0

    @property
    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.advance()
        if val != value or kind != "op":
            found = "end of input" if kind == "end" else repr(val)
            raise ExpressionError(f"expected {value!r}, found {found}", pos)

    def parse(self) -> Node:
        node = self.expr()
        kind, val, pos = self.peek
        if kind != "end":
            raise ExpressionError(f"unexpected {val!r}", pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek[1] in ("+", "-") and self.peek[0] == "op":
            op = self.advance()[1]
            lhs, rhs = node, self.term()
            node = (lambda a, b: lambda x: _finite(a(x) + b(x)))(lhs, rhs) if op == "+" else \
                (lambda a, b: lambda x: _finite(a(x) - b(x)))(lhs, rhs)
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek[1] in ("*", "/") and self.peek[0] == "op":
            op = self.advance()[1]
            lhs, rhs = node, self.unary()
            node = (lambda a, b: lambda x: _finite(a(x) * b(x)))(lhs, rhs) if op == "*" else \
                (lambda a, b: lambda x: _finite(_div(a(x), b(x))))(lhs, rhs)
        return node

    def unary(self) -> Node:
        if self.peek[0] == "op" and self.peek[1] in ("+", "-"):
            op = self.advance()[1]
            inner = self.unary()
            return inner if op == "+" else (lambda a: lambda x: -a(x))(inner)
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek[0] == "op" and self.peek[1] == "^":
            self.advance()
            exponent = self.unary()
            return (lambda a, b: lambda x: _finite(_pow(a(x), b(x))))(base, exponent)
        return base

    def atom(self) -> Node:
        kind, val, pos = self.advance()
        if kind == "num":
            c = float(val)
            return lambda x, c=c: np.full(x.shape[:-1], c)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            m = _VAR.match(val)
            if m:
                idx = int(m.group(1))
                self.max_var = max(self.max_var, idx)
                return lambda x, j=idx - 1: x[..., j]
            if val == "pi":
                return lambda x: np.full(x.shape[:-1], math.pi)
            if val in UNARY or val in BINARY:
                return self.call(val, pos)
            raise ExpressionError(f"unknown identifier {val!r}", pos)
        found = "end of input" if kind == "end" else repr(val)
        raise ExpressionError(f"unexpected {found}", pos)

    def call(self, name: str, pos: int) -> Node:
        self.expect("(")
        args = [self.expr()]
        while self.peek[0] == "op" and self.peek[1] == ",":
            self.advance()
            args.append(self.expr())
        self.expect(")")
        arity = 1 if name in UNARY else 2
        if len(args) != arity:
            raise ExpressionError(f"{name} takes {arity} argument(s), got {len(args)}", pos)
        if arity == 1:
            fn = UNARY[name]
            return (lambda f, a: lambda x: _finite(f(a(x))))(fn, args[0])
        fn = BINARY[name]
        return (lambda f, a, b: lambda x: _finite(f(a(x), b(x))))(fn, args[0], args[1])


@dataclass(frozen=True)
class Expression:
    """Compiled expression; call with one point ``(m,)`` or a batch ``(B, m)``."""

    text: str
    n_vars: int
    _node: Callable

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] < self.n_vars:
            raise ValueError(f"expression uses x{self.n_vars} but got {x.shape[-1]} variables")
        with np.errstate(all="ignore"):
            v = np.asarray(self._node(x), dtype=float)
        v = np.where(np.isfinite(v), v, np.inf)
        return float(v) if v.ndim == 0 else v


def parse_expression(text: str) -> Expression:
    """Compile ``text``; raises :class:`ExpressionError` with the offending position."""
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("empty expression", 0)
    parser = _Parser(text)
    node = parser.parse()
    return Expression(text, parser.max_var, node)
