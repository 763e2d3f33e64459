"""A small checked arithmetic language for parameter bindings and model formulas.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := "-" factor | NUMBER unit? | IDENT | "(" expr ")"
            | FUNC "(" expr ("," expr)* ")"
    unit   := "[" UNIT-SYMBOL "]"
    FUNC   := pow | min | max | log | exp

Values are computed in coherent base units. The evaluator works on floats
and on numpy arrays alike, which is how Monte Carlo batches are pushed
through the same formulas.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    DimensionMismatch,
    DivisionByZero,
    ExprSyntaxError,
    LcaError,
    UnknownParameter,
)
from .units import DIMENSIONLESS, Dimension, Quantity, UnitTable, default_table, parse_unit

FUNCS = ("pow", "min", "max", "log", "exp")


class DomainError(LcaError):
    """log of a non-positive value, or a non-finite result."""


@dataclass(frozen=True)
class Num:
    value: float
    unit: str | None = None


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Expression = Num | Param | Neg | BinOp | Call

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<unit>\[[^\]]*\])
  | (?P<op>[-+*/(),])
    """,
    re.VERBOSE,
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), _byte_offset(text, pos)))
        pos = m.end()
    tokens.append(("eof", "", _byte_offset(text, len(text))))
    return tokens


def _byte_offset(text, index):
    return len(text[:index].encode("utf-8"))


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, off = self.take()
        if text != value or kind not in ("op",):
            found = "end of input" if kind == "eof" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", off)

    def parse(self):
        node = self.expr()
        kind, text, off = self.peek()
        if kind != "eof":
            raise ExprSyntaxError(f"unexpected {text!r}", off)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        kind, text, off = self.take()
        if kind == "op" and text == "-":
            return Neg(self.factor())
        if kind == "num":
            unit = None
            if self.peek()[0] == "unit":
                raw = self.take()[1][1:-1].strip()
                if not raw:
                    raise ExprSyntaxError("empty unit annotation", self.tokens[self.i - 1][2])
                unit = raw
            return Num(float(text), unit)
        if kind == "ident":
            if text in FUNCS:
                return self.call(text, off)
            return Param(text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "eof" else repr(text)
        raise ExprSyntaxError(f"expected a number, name or '(', found {found}", off)

    def call(self, func, off):
        self.expect("(")
        args = [self.expr()]
        while self.peek()[1] == ",":
            self.take()
            args.append(self.expr())
        self.expect(")")
        arity = {"pow": 2, "log": 1, "exp": 1}.get(func)
        if arity is not None and len(args) != arity:
            raise ExprSyntaxError(f"{func} takes {arity} argument(s), got {len(args)}", off)
        if func == "pow":
            _rational(args[1], off)
        return Call(func, tuple(args))


def _rational(node, off=0) -> Fraction:
    """Fold a constant pow exponent to an exact rational."""
    if isinstance(node, Num) and node.unit is None:
        return Fraction(repr(node.value))
    if isinstance(node, Neg):
        return -_rational(node.operand, off)
    if isinstance(node, BinOp):
        a, b = _rational(node.left, off), _rational(node.right, off)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if b == 0:
            raise ExprSyntaxError("pow exponent divides by zero", off)
        return a / b
    raise ExprSyntaxError("pow exponent must be a rational constant", off)


def parse_expression(text: str) -> Expression:
    return _Parser(text).parse()


def references(node) -> set:
    """Names of all parameters referenced by ``node``."""
    if isinstance(node, Param):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return references(node.operand)
    if isinstance(node, BinOp):
        return references(node.left) | references(node.right)
    out = set()
    for a in node.args:
        out |= references(a)
    return out


def unit_symbols(node) -> set:
    if isinstance(node, Num):
        return {node.unit} if node.unit else set()
    if isinstance(node, Param):
        return set()
    if isinstance(node, Neg):
        return unit_symbols(node.operand)
    if isinstance(node, BinOp):
        return unit_symbols(node.left) | unit_symbols(node.right)
    out = set()
    for a in node.args:
        out |= unit_symbols(a)
    return out


def _fmt_num(v: float) -> str:
    if v.is_integer() and abs(v) < 2.0**53:
        return str(int(v))
    return repr(v)


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def unparse(node, _parent=0, _right=False) -> str:
    """Canonical source text; ``parse_expression(unparse(e)) == e``."""
    if isinstance(node, Num):
        s = _fmt_num(node.value)
        return f"{s} [{node.unit}]" if node.unit else s
    if isinstance(node, Param):
        return node.name
    if isinstance(node, Neg):
        inner = node.operand
        s = unparse(inner, 3)
        return f"-{s}"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(unparse(a) for a in node.args)})"
    prec = _PREC[node.op]
    s = f"{unparse(node.left, prec)} {node.op} {unparse(node.right, prec, True)}"
    if prec < _parent or (prec == _parent and _right) or _parent == 3:
        return f"({s})"
    return s


def infer_dimension(e, param_dims: dict, table: UnitTable | None = None) -> Dimension:
    table = table or default_table()
    if isinstance(e, Num):
        return parse_unit(e.unit, table).dimension if e.unit else DIMENSIONLESS
    if isinstance(e, Param):
        if e.name not in param_dims:
            raise UnknownParameter(f"unknown parameter {e.name!r}")
        return param_dims[e.name]
    if isinstance(e, Neg):
        return infer_dimension(e.operand, param_dims, table)
    if isinstance(e, BinOp):
        a = infer_dimension(e.left, param_dims, table)
        b = infer_dimension(e.right, param_dims, table)
        if e.op in "+-":
            if a != b:
                raise DimensionMismatch(f"cannot {'add' if e.op == '+' else 'subtract'} {a} and {b}")
            return a
        return a * b if e.op == "*" else a / b
    dims = [infer_dimension(a, param_dims, table) for a in e.args]
    if e.func in ("log", "exp"):
        if not dims[0].is_dimensionless:
            raise DimensionMismatch(f"{e.func} needs a dimensionless argument, got {dims[0]}")
        return DIMENSIONLESS
    if e.func == "pow":
        if not dims[1].is_dimensionless:
            raise DimensionMismatch("pow exponent must be dimensionless")
        try:
            return dims[0] ** _rational(e.args[1])
        except DimensionMismatch as exc:
            raise DimensionMismatch(f"pow gives a fractional dimension: {exc}") from None
    first = dims[0]
    for d in dims[1:]:
        if d != first:
            raise DimensionMismatch(f"{e.func} over mixed dimensions {first} and {d}")
    return first


def _zero_index(arr):
    a = np.asarray(arr)
    if a.ndim == 0:
        return None
    return int(np.flatnonzero(a == 0)[0])


def evaluate_base(e, values: dict, table: UnitTable | None = None):
    """Evaluate with magnitudes already in base units (floats or arrays)."""
    table = table or default_table()
    if isinstance(e, Num):
        return e.value * parse_unit(e.unit, table).scale if e.unit else e.value
    if isinstance(e, Param):
        try:
            return values[e.name]
        except KeyError:
            raise UnknownParameter(f"unknown parameter {e.name!r}") from None
    if isinstance(e, Neg):
        return -evaluate_base(e.operand, values, table)
    if isinstance(e, BinOp):
        a = evaluate_base(e.left, values, table)
        b = evaluate_base(e.right, values, table)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if np.any(np.asarray(b) == 0):
            exc = DivisionByZero(f"division by zero in {unparse(e)}")
            exc.index = _zero_index(b)
            raise exc
        return a / b
    args = [evaluate_base(a, values, table) for a in e.args]
    if e.func == "pow":
        return np.power(args[0], float(_rational(e.args[1])))
    if e.func == "exp":
        return np.exp(args[0])
    if e.func == "log":
        if np.any(np.asarray(args[0]) <= 0):
            raise DomainError(f"log of a non-positive value in {unparse(e)}")
        return np.log(args[0])
    out = args[0]
    for a in args[1:]:
        out = np.minimum(out, a) if e.func == "min" else np.maximum(out, a)
    return out


def evaluate(e, bindings: dict, table: UnitTable | None = None) -> Quantity:
    """Evaluate against Quantity bindings; the result is in the base unit of its dimension."""
    table = table or default_table()
    dims = {k: q.dimension for k, q in bindings.items()}
    dim = infer_dimension(e, dims, table)
    value = evaluate_base(e, {k: q.base_value for k, q in bindings.items()}, table)
    value = float(value)
    if not np.isfinite(value):
        raise DomainError(f"non-finite result evaluating {unparse(e)}")
    return Quantity(value, table.base_unit(dim))
