"""Index-dependent parameter schedules.

Scheduled noise parameters are written as tiny arithmetic expressions in
the step index ``n``, e.g. ``"0.25"``, ``"-n^(-1/3)"``, ``"sqrt(n)"``,
``"1 - 1/n^2"``.  The grammar is a closed whitelist -- numbers, ``n``,
``sqrt(...)``, parentheses and ``+ - * / ^`` -- so config files stay
declarative and safe.  Parsed schedules evaluate on scalars or numpy
arrays and pickle cleanly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np


class ScheduleParseError(ValueError):
    """Raised when a schedule expression falls outside the whitelist."""


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?"
    r"|(?P<name>[A-Za-z_]+)"
    r"|(?P<op>\*\*|[()+\-*/^]))"
)


def _tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise ScheduleParseError(f"unexpected character {text[pos]!r} in {text!r}")
        if m.group("num") is not None:
            tokens.append(m.group(0).strip())
        elif m.group("name") is not None:
            name = m.group("name")
            if name not in ("n", "sqrt"):
                raise ScheduleParseError(f"unknown name {name!r} in {text!r}")
            tokens.append(name)
        else:
            op = m.group("op")
            tokens.append("^" if op == "**" else op)
        pos = m.end()
    if not tokens:
        raise ScheduleParseError(f"empty schedule expression {text!r}")
    return tokens


class _Parser:
    def __init__(self, tokens: list[str], source: str):
        self.tokens = tokens
        self.pos = 0
        self.source = source

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, expected=None):
        tok = self.peek()
        if tok is None or (expected is not None and tok != expected):
            raise ScheduleParseError(
                f"expected {expected or 'token'} at position {self.pos} in {self.source!r}"
            )
        self.pos += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.peek() is not None:
            raise ScheduleParseError(f"trailing input {self.peek()!r} in {self.source!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in ("+", "-"):
            op = self.take()
            rhs = self.term()
            node = ("add" if op == "+" else "sub", node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek() in ("*", "/"):
            op = self.take()
            rhs = self.unary()
            node = ("mul" if op == "*" else "div", node, rhs)
        return node

    def unary(self):
        if self.peek() == "-":
            self.take()
            return ("neg", self.unary())
        if self.peek() == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == "^":
            self.take()
            # right-associative; exponent may carry its own sign, e.g. n^-2
            return ("pow", base, self.unary())
        return base

    def atom(self):
        tok = self.peek()
        if tok is None:
            raise ScheduleParseError(f"unexpected end of expression in {self.source!r}")
        if tok == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        if tok == "n":
            self.take()
            return ("n",)
        if tok == "sqrt":
            self.take()
            self.take("(")
            node = self.expr()
            self.take(")")
            return ("sqrt", node)
        if tok[0].isdigit() or tok[0] == ".":
            self.take()
            return ("num", float(tok))
        raise ScheduleParseError(f"unexpected token {tok!r} in {self.source!r}")


def _eval(node, n):
    kind = node[0]
    if kind == "num":
        return node[1]
    if kind == "n":
        return n
    if kind == "neg":
        return -_eval(node[1], n)
    if kind == "sqrt":
        return np.sqrt(_eval(node[1], n))
    a = _eval(node[1], n)
    b = _eval(node[2], n)
    if kind == "add":
        return a + b
    if kind == "sub":
        return a - b
    if kind == "mul":
        return a * b
    if kind == "div":
        return a / b
    if kind == "pow":
        return np.power(a, b)
    raise AssertionError(f"unknown node {kind}")


def _contains_n(node) -> bool:
    if node[0] == "n":
        return True
    return any(_contains_n(c) for c in node[1:] if isinstance(c, tuple))


@dataclass(frozen=True)
class Schedule:
    """A parameter as a function of the step index n >= 1.

    Equality and hashing go through the source text, so identical
    expressions compare equal regardless of how they were built.
    """

    source: str
    ast: tuple = field(compare=False, repr=False)

    @classmethod
    def parse(cls, text: str) -> "Schedule":
        text = text.strip()
        ast = _Parser(_tokenize(text), text).parse()
        return cls(source=text, ast=ast)

    @classmethod
    def constant(cls, value: float) -> "Schedule":
        v = float(value)
        return cls(source=repr(v), ast=("num", v))

    @property
    def is_constant(self) -> bool:
        return not _contains_n(self.ast)

    def value(self, n):
        """Evaluate at a scalar index or an integer array of indices."""
        if isinstance(n, np.ndarray):
            out = _eval(self.ast, n.astype(float))
            return np.broadcast_to(np.asarray(out, dtype=float), n.shape).copy() if np.ndim(out) == 0 else np.asarray(out, dtype=float)
        return float(_eval(self.ast, float(n)))

    def constant_value(self) -> float:
        if not self.is_constant:
            raise ValueError(f"schedule {self.source!r} depends on n")
        return float(_eval(self.ast, 1.0))


def as_schedule(value) -> Schedule:
    """Coerce a float, expression string or Schedule into a Schedule."""
    if isinstance(value, Schedule):
        return value
    if isinstance(value, str):
        return Schedule.parse(value)
    if isinstance(value, (int, float)):
        return Schedule.constant(value)
    raise TypeError(f"cannot interpret {value!r} as a schedule")
