"""Strict MAJOR.MINOR.PATCH versions and version requirements.

Requirement syntax::

    =1.2.3            exact
    ^1.2.3            caret: >=1.2.3 and same MAJOR
    >=1.0.0,<2.0.0    range; either bound may be omitted, each bound
                      inclusive (>=, <=) or exclusive (>, <)
"""

from __future__ import annotations

import re
from dataclasses import dataclass

_VERSION = re.compile(r"^(0|[1-9]\d*)\.(0|[1-9]\d*)\.(0|[1-9]\d*)$")


@dataclass(frozen=True, order=True)
class Version:
    major: int
    minor: int
    patch: int

    @classmethod
    def parse(cls, text: str) -> Version:
        m = _VERSION.match(text.strip()) if isinstance(text, str) else None
        if not m:
            raise ValueError(f"invalid version {text!r} (expected MAJOR.MINOR.PATCH)")
        return cls(*(int(g) for g in m.groups()))

    def __str__(self):
        return f"{self.major}.{self.minor}.{self.patch}"


@dataclass(frozen=True)
class VersionReq:
    kind: str  # "exact" | "caret" | "range"
    lo: Version | None = None
    hi: Version | None = None
    lo_inclusive: bool = True
    hi_inclusive: bool = True

    def __post_init__(self):
        if self.kind == "range" and self.lo and self.hi and self.lo > self.hi:
            raise ValueError(f"empty range {self}")

    @classmethod
    def exact(cls, v) -> VersionReq:
        v = Version.parse(v) if isinstance(v, str) else v
        return cls("exact", v, v)

    @classmethod
    def caret(cls, v) -> VersionReq:
        v = Version.parse(v) if isinstance(v, str) else v
        return cls("caret", v)

    @classmethod
    def parse(cls, text: str) -> VersionReq:
        s = text.strip()
        if s.startswith("="):
            return cls.exact(s[1:])
        if s.startswith("^"):
            return cls.caret(s[1:])
        if _VERSION.match(s):
            return cls.exact(s)
        lo = hi = None
        lo_inc = hi_inc = True
        parts = [p.strip() for p in s.split(",")]
        if not s or len(parts) > 2:
            raise ValueError(f"invalid version requirement {text!r}")
        for part in parts:
            m = re.match(r"^(>=|<=|>|<)\s*(.+)$", part)
            if not m:
                raise ValueError(f"invalid version requirement {text!r}")
            op, v = m.group(1), Version.parse(m.group(2))
            if op.startswith(">"):
                if lo is not None:
                    raise ValueError(f"two lower bounds in {text!r}")
                lo, lo_inc = v, op == ">="
            else:
                if hi is not None:
                    raise ValueError(f"two upper bounds in {text!r}")
                hi, hi_inc = v, op == "<="
        return cls("range", lo, hi, lo_inc, hi_inc)

    def matches(self, v: Version) -> bool:
        if self.kind == "exact":
            return v == self.lo
        if self.kind == "caret":
            return v >= self.lo and v.major == self.lo.major
        if self.lo is not None and (v < self.lo or (v == self.lo and not self.lo_inclusive)):
            return False
        if self.hi is not None and (v > self.hi or (v == self.hi and not self.hi_inclusive)):
            return False
        return True

    def __str__(self):
        if self.kind == "exact":
            return f"={self.lo}"
        if self.kind == "caret":
            return f"^{self.lo}"
        parts = []
        if self.lo is not None:
            parts.append(f"{'>=' if self.lo_inclusive else '>'}{self.lo}")
        if self.hi is not None:
            parts.append(f"{'<=' if self.hi_inclusive else '<'}{self.hi}")
        return ",".join(parts)
