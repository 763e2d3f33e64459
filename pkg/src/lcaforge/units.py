"""Dimensions, units and checked quantities.

Units are linear (no offsets). Every unit carries a positive ``scale`` to the
coherent base unit of its dimension, so conversion is a single ratio.
Unit tables are data files; :func:`default_table` loads the one shipped with
the package.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources

from .errors import DimensionMismatch, UnknownUnit

BASE_DIMENSIONS = ("mass", "length", "time", "current", "temperature", "amount")


class Dimension:
    """Immutable map of base-dimension name to integer exponent."""

    __slots__ = ("_exps", "_hash")

    def __init__(self, exponents=None):
        items = {}
        for name, exp in (exponents or {}).items():
            exp = Fraction(exp)
            if exp.denominator != 1:
                raise DimensionMismatch(f"non-integer exponent {exp} for {name}")
            if exp != 0:
                items[str(name)] = int(exp)
        self._exps = tuple(sorted(items.items()))
        self._hash = hash(self._exps)

    @classmethod
    def of(cls, **exponents):
        return cls(exponents)

    @property
    def exponents(self) -> dict:
        return dict(self._exps)

    @property
    def is_dimensionless(self) -> bool:
        return not self._exps

    def impact_categories(self):
        return [n[len("impact:"):] for n, _ in self._exps if n.startswith("impact:")]

    def __mul__(self, other: Dimension) -> Dimension:
        exps = dict(self._exps)
        for n, e in other._exps:
            exps[n] = exps.get(n, 0) + e
        return Dimension(exps)

    def __truediv__(self, other: Dimension) -> Dimension:
        exps = dict(self._exps)
        for n, e in other._exps:
            exps[n] = exps.get(n, 0) - e
        return Dimension(exps)

    def __pow__(self, power) -> Dimension:
        power = Fraction(power)
        return Dimension({n: e * power for n, e in self._exps})

    def __eq__(self, other):
        return isinstance(other, Dimension) and self._exps == other._exps

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Dimension({self})"

    def __str__(self):
        if not self._exps:
            return "1"
        return "*".join(n if e == 1 else f"{n}^{e}" for n, e in self._exps)

    def to_json(self) -> dict:
        return dict(self._exps)


DIMENSIONLESS = Dimension()


@dataclass(frozen=True)
class Unit:
    symbol: str
    dimension: Dimension
    scale: float

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"unit {self.symbol!r}: scale must be positive and finite")


@dataclass(frozen=True)
class Quantity:
    value: float
    unit: Unit

    def __post_init__(self):
        v = float(self.value)
        if not math.isfinite(v):
            raise ValueError(f"quantity value must be finite, got {self.value!r}")
        object.__setattr__(self, "value", v)

    @property
    def dimension(self) -> Dimension:
        return self.unit.dimension

    @property
    def base_value(self) -> float:
        return self.value * self.unit.scale

    def to(self, target: Unit) -> Quantity:
        return convert(self, target)

    def to_json(self) -> dict:
        return {"value": self.value, "unit": self.unit.symbol}

    def __str__(self):
        return f"{self.value!r} {self.unit.symbol}"


_TERM = re.compile(r"^(?P<sym>[^\^]+?)(?:\^(?P<exp>[+-]?\d+))?$")


@dataclass(eq=False)
class UnitTable:
    """Symbol lookup plus base-symbol naming for derived dimensions."""

    dimensions: tuple
    units: dict = field(default_factory=dict)
    _base_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_json(cls, doc: dict) -> UnitTable:
        dims = tuple(doc["dimensions"])
        known = set(dims)
        table = cls(dimensions=dims)
        for entry in doc["units"]:
            exps = entry["dimension"]
            unknown = set(exps) - known
            if unknown:
                raise ValueError(f"unit {entry['symbol']!r} uses undeclared dimensions {sorted(unknown)}")
            unit = Unit(entry["symbol"], Dimension(exps), float(entry["scale"]))
            if unit.symbol in table.units:
                raise ValueError(f"duplicate unit symbol {unit.symbol!r}")
            table.units[unit.symbol] = unit
        return table

    @classmethod
    def load(cls, path) -> UnitTable:
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def parse(self, symbol: str) -> Unit:
        return parse_unit(symbol, self)

    def base_unit(self, dim: Dimension) -> Unit:
        return _base_unit(self, dim)


def parse_unit(symbol: str, table: UnitTable) -> Unit:
    """Look up ``symbol``; compound forms ``a*b``, ``a/b`` and ``a^n`` are also accepted."""
    sym = symbol.strip()
    if sym in table.units:
        return table.units[sym]
    if not sym or not any(c in sym for c in "*/^"):
        raise UnknownUnit(f"unknown unit {symbol!r}")
    dim = DIMENSIONLESS
    scale = 1.0
    pieces = re.split(r"([*/])", sym)
    for i in range(0, len(pieces), 2):
        sign = -1 if i > 0 and pieces[i - 1] == "/" else 1
        m = _TERM.match(pieces[i].strip())
        if not m:
            raise UnknownUnit(f"unknown unit {symbol!r}")
        base = m.group("sym").strip()
        if base == "1":
            continue
        if base not in table.units:
            raise UnknownUnit(f"unknown unit {base!r} in {symbol!r}")
        exp = int(m.group("exp") or 1) * sign
        u = table.units[base]
        dim = dim * u.dimension ** exp
        scale *= u.scale**exp
    return Unit(sym, dim, scale)


def _base_unit(table: UnitTable, dim: Dimension) -> Unit:
    cache = table._base_cache
    if dim not in cache:
        cache[dim] = _find_base_unit(table, dim)
    return cache[dim]


def _find_base_unit(table, dim):
    for u in table.units.values():
        if u.dimension == dim and u.scale == 1.0:
            return u
    if dim.is_dimensionless:
        return Unit("1", dim, 1.0)
    parts = []
    for name, exp in dim.exponents.items():
        sym = None
        for u in table.units.values():
            if u.dimension == Dimension({name: 1}) and u.scale == 1.0:
                sym = u.symbol
                break
        if sym is None:
            raise UnknownUnit(f"no base unit for dimension {name!r}")
        parts.append(sym if exp == 1 else f"{sym}^{exp}")
    return Unit("*".join(parts), dim, 1.0)


def convert(q: Quantity, target: Unit) -> Quantity:
    if q.unit.dimension != target.dimension:
        raise DimensionMismatch(
            f"cannot convert {q.unit.symbol} ({q.unit.dimension}) to {target.symbol} ({target.dimension})"
        )
    if q.unit.symbol == target.symbol and q.unit.scale == target.scale:
        return q
    return Quantity(q.value * (q.unit.scale / target.scale), target)


def quantity(value, symbol: str, table: UnitTable | None = None) -> Quantity:
    table = table or default_table()
    return Quantity(value, parse_unit(symbol, table))


def quantity_from_json(doc, table: UnitTable) -> Quantity:
    if isinstance(doc, str):
        num, _, sym = doc.strip().partition(" ")
        return Quantity(float(num), parse_unit(sym or "1", table))
    return Quantity(float(doc["value"]), parse_unit(doc["unit"], table))


@lru_cache(maxsize=None)
def default_table() -> UnitTable:
    text = resources.files("lcaforge.data").joinpath("units.json").read_text(encoding="utf-8")
    return UnitTable.from_json(json.loads(text))
