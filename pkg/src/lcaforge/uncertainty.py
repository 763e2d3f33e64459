"""Pedigree-based distributions and seeded Monte Carlo propagation.

Sample ``k`` draws its uniforms for uncertain item ``j`` from a counter-based
generator keyed by ``(seed, k, j)``, so results do not depend on how the
samples are chunked or how many workers evaluate the chunks.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.special import ndtri

from . import kernels
from .canonical import read_json
from .compute import CharacterizationTable, DemandSpec, Strategy, evaluate, raise_for_issues, relevant_nodes, run_arrays
from .errors import DimensionMismatch, EmptySamples, LcaError, SampleFailure
from .manifest import PEDIGREE_INDICATORS, ModelKind
from .params import Instantiation
from .units import Quantity, default_table, quantity_from_json

DEFAULT_QUANTILES = (0.025, 0.5, 0.975)
DEFAULT_CHUNK = 4096


class NonPositiveValue(UserWarning):
    """A lognormal was requested around a value that is not strictly positive."""


# -------------------------------------------------------------- factor table


@dataclass(frozen=True)
class FactorTable:
    table_id: str
    version: str
    factors: dict  # indicator -> (U1, ..., U5)

    def __post_init__(self):
        for name in PEDIGREE_INDICATORS:
            us = self.factors.get(name)
            if us is None or len(us) != 5:
                raise ValueError(f"factor table needs five factors for {name!r}")
            if us[0] != 1.0:
                raise ValueError(f"{name}: the factor for score 1 must be 1")
            if any(b < a for a, b in zip(us, us[1:])):
                raise ValueError(f"{name}: factors must not decrease with the score")
        extra = set(self.factors) - set(PEDIGREE_INDICATORS)
        if extra:
            raise ValueError(f"unknown pedigree indicators {sorted(extra)}")

    @classmethod
    def from_json(cls, doc) -> FactorTable:
        factors = {
            name: tuple(float(row[str(s)]) for s in range(1, 6)) for name, row in doc["factors"].items()
        }
        return cls(str(doc["table_id"]), str(doc["version"]), factors)

    @classmethod
    def load(cls, path) -> FactorTable:
        return cls.from_json(read_json(path))

    def factor(self, indicator, score) -> float:
        return self.factors[indicator][int(score) - 1]


def synthetic_factor_table() -> FactorTable:
    text = resources.files("lcaforge.data").joinpath("pedigree_synthetic.json").read_text(encoding="utf-8")
    return FactorTable.from_json(json.loads(text))


# ------------------------------------------------------------- distributions


@dataclass(frozen=True)
class Point:
    value: float

    def ppf(self, u):
        return np.full(np.shape(u), float(self.value))


@dataclass(frozen=True)
class Lognormal:
    median: float
    sigma_ln: float

    def __post_init__(self):
        if not self.median > 0:
            raise ValueError("lognormal median must be > 0")
        if not self.sigma_ln >= 0:
            raise ValueError("sigma_ln must be >= 0")

    def ppf(self, u):
        return self.median * np.exp(self.sigma_ln * ndtri(u))


@dataclass(frozen=True)
class Normal:
    mean: float
    sd: float

    def __post_init__(self):
        if not self.sd >= 0:
            raise ValueError("sd must be >= 0")

    def ppf(self, u):
        return self.mean + self.sd * ndtri(u)


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError("uniform needs lo <= hi")

    def ppf(self, u):
        return self.lo + (self.hi - self.lo) * np.asarray(u)


@dataclass(frozen=True)
class Triangular:
    lo: float
    mode: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.mode <= self.hi:
            raise ValueError("triangular needs lo <= mode <= hi")

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        lo, c, hi = self.lo, self.mode, self.hi
        width = hi - lo
        if width == 0:
            return np.full(u.shape, lo)
        fc = (c - lo) / width
        left = lo + np.sqrt(u * width * (c - lo))
        right = hi - np.sqrt((1 - u) * width * (hi - c))
        return np.where(u < fc, left, right)


def pedigree_sigma(scores, basic_factor: float, table: FactorTable) -> float:
    if len(scores) != 5 or any(int(s) != s or not 1 <= s <= 5 for s in scores):
        raise ValueError("pedigree scores are five integers in 1..5")
    if basic_factor < 1:
        raise ValueError("basic uncertainty factor must be >= 1")
    terms = [math.log(basic_factor) ** 2]
    terms += [math.log(table.factor(ind, s)) ** 2 for ind, s in zip(PEDIGREE_INDICATORS, scores)]
    return math.sqrt(math.fsum(terms))


def pedigree_to_distribution(value, scores, basic_factor: float, table: FactorTable, notes=None):
    """Median-preserving lognormal around ``value`` (a Quantity or base-unit float).

    A non-positive value cannot carry a lognormal; it becomes a Point and a
    note is appended to ``notes`` (or a :class:`NonPositiveValue` warning is
    issued when no list is given).
    """
    v = value.base_value if isinstance(value, Quantity) else float(value)
    sigma = pedigree_sigma(scores, basic_factor, table)
    if v <= 0:
        msg = f"value {v!r} is not positive; using a point value instead of a lognormal"
        if notes is None:
            warnings.warn(msg, NonPositiveValue, stacklevel=2)
        else:
            notes.append(msg)
        return Point(v)
    return Lognormal(v, sigma)


@dataclass(frozen=True)
class Stream:
    """Uniform source for one (sample, item) cell of a seeded run."""

    seed: int
    sample: int
    index: int = 0

    def uniform(self) -> float:
        return float(kernels.counter_uniforms(self.seed, self.sample, 1, self.index + 1)[0, self.index])


def sample(d, stream: Stream) -> float:
    if isinstance(d, Point):
        return float(d.value)
    return float(d.ppf(np.array([stream.uniform()]))[0])


# -------------------------------------------------------- uncertain items


@dataclass(frozen=True)
class UncertainItem:
    """``key`` is ("param", node, name) or ("exchange", process, part, index)."""

    key: tuple
    dist: object
    multiplicative: bool = False


def _dist_from_spec(spec, default, dim, table, ftable, notes, where):
    kind = spec["type"]

    def q(name):
        val = quantity_from_json(spec[name], table)
        if val.dimension != dim:
            raise DimensionMismatch(f"{where}: {name} has dimension {val.dimension}, parameter is {dim}")
        return val.base_value

    if kind == "pedigree":
        if default is None:
            raise LcaError(f"{where}: pedigree uncertainty needs a parameter default")
        return pedigree_to_distribution(default, spec["scores"], spec.get("basic_factor", 1.0), ftable, notes)
    if kind == "lognormal":
        median = q("median") if spec.get("median") is not None else default
        if median is None:
            raise LcaError(f"{where}: lognormal needs a median or a parameter default")
        if median <= 0:
            notes.append(f"{where}: median {median!r} is not positive; using a point value")
            return Point(median)
        return Lognormal(median, float(spec["sigma_ln"]))
    if kind == "point":
        return Point(q("value"))
    if kind == "normal":
        return Normal(q("mean"), q("sd"))
    if kind == "uniform":
        return Uniform(q("lo"), q("hi"))
    return Triangular(q("lo"), q("mode"), q("hi"))


def uncertain_items(g, ftable: FactorTable | None = None, table=None, notes=None) -> list:
    """Every uncertain quantity of the graph, sorted by key.

    Sources: parameter pedigree scores, UncertaintyModel bodies (which take
    precedence for the parameters they name) and exchange pedigree scores,
    which become multiplicative lognormals with median 1.
    """
    table = table or default_table()
    ftable = ftable or synthetic_factor_table()
    notes = notes if notes is not None else []
    items = {}
    inst = Instantiation(g, table)
    for nid in g.ids:
        m = g.manifests[nid]
        for p in m.params:
            if p.pedigree is not None and p.default is not None:
                items[("param", nid, p.name)] = UncertainItem(
                    ("param", nid, p.name),
                    pedigree_to_distribution(p.default, p.pedigree, p.basic_uncertainty_factor or 1.0, ftable, notes),
                )
        for e in g.out_edges(nid):
            if e.role != "uncertainty" or g.manifests[e.target].kind is not ModelKind.UNCERTAINTY:
                continue
            for name, spec in sorted(g.manifests[e.target].body.items()):
                p = m.param(name)
                if p is None:
                    raise LcaError(f"{e.target} describes {name!r}, which {nid} does not declare")
                default = None if p.default is None else p.default.base_value
                where = f"{e.target}/{name}"
                items[("param", nid, name)] = UncertainItem(
                    ("param", nid, name), _dist_from_spec(spec, default, p.dimension, table, ftable, notes, where)
                )
        if m.kind is ModelKind.PROCESS:
            for part in ("technosphere", "biosphere"):
                for x in getattr(m.body, part):
                    if x.pedigree is None:
                        continue
                    key = ("exchange", nid, part, x.index)
                    amount, _ = inst.evaluate(nid, x.amount)
                    if float(amount) <= 0:
                        notes.append(f"{nid} {part}[{x.index}]: amount is not positive; pedigree ignored")
                        continue
                    sigma = pedigree_sigma(x.pedigree, x.basic_uncertainty_factor or 1.0, ftable)
                    items[key] = UncertainItem(key, Lognormal(1.0, sigma), multiplicative=True)
    return [items[k] for k in sorted(items)]


# --------------------------------------------------------------- monte carlo


@dataclass(frozen=True)
class MCConfig:
    n: int
    seed: int
    quantiles: tuple = DEFAULT_QUANTILES

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("sample count must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if any(not 0 <= q <= 1 for q in self.quantiles):
            raise ValueError("quantiles must lie in [0, 1]")


@dataclass
class MCResult:
    stats: dict  # category -> {"mean", "median", "sd", "quantiles": {q: v}, "unit"}
    n: int
    seed: int
    deterministic: dict  # category -> value
    strategy: str
    notes: list = field(default_factory=list)
    samples: dict | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "seed": self.seed,
            "strategy": self.strategy,
            "deterministic": self.deterministic,
            "categories": self.stats,
            "notes": self.notes,
        }


def _qkey(q) -> str:
    return repr(float(q))


def summarize(samples: dict, quantiles=DEFAULT_QUANTILES) -> dict:
    """Mean, median, population sd and linear-interpolation quantiles per category."""
    if not samples:
        raise EmptySamples("no categories to summarize")
    out = {}
    for cat, arr in sorted(samples.items()):
        a = np.asarray(arr, dtype=float)
        if a.size == 0:
            raise EmptySamples(f"no samples for {cat}")
        if np.all(a == a[0]):
            mean, sd = float(a[0]), 0.0
        else:
            mean, sd = float(np.mean(a)), float(np.std(a))
        qs = np.quantile(a, list(quantiles), method="linear")
        out[cat] = {
            "mean": mean,
            "median": float(np.quantile(a, 0.5, method="linear")),
            "sd": sd,
            "quantiles": {_qkey(q): float(v) for q, v in zip(quantiles, qs)},
        }
    return out


def _draws(items, seed, start, count):
    u = kernels.counter_uniforms(seed, start, count, len(items))
    overrides, factors = {}, {}
    for j, it in enumerate(items):
        vals = it.dist.ppf(u[:, j]) if len(items) else None
        if it.multiplicative:
            factors[it.key[1:]] = vals
        else:
            overrides[it.key[1:]] = vals
    return overrides, factors


def _evaluate_chunk(g, demand, strategy, cf, table, items, seed, start, count):
    overrides, factors = _draws(items, seed, start, count)
    inst = Instantiation(g, table, overrides)
    raise_for_issues(inst, relevant_nodes(g, demand.product))
    run = run_arrays(g, demand, strategy, cf, table=table, inst=inst, exchange_factors=factors, batch=count)
    for cat, v in run.impacts.items():
        bad = np.flatnonzero(~np.isfinite(v))
        if bad.size:
            raise SampleFailure(start + int(bad[0]), LcaError(f"non-finite {cat} value"))
    return run.impacts


def _chunk_or_locate(args):
    g, demand, strategy, cf, table, items, seed, start, count = args
    try:
        return _evaluate_chunk(*args)
    except SampleFailure:
        raise
    except LcaError as exc:
        # re-run one sample at a time to name the first failing index
        for k in range(start, start + count):
            try:
                _evaluate_chunk(g, demand, strategy, cf, table, items, seed, k, 1)
            except SampleFailure:
                raise
            except LcaError as inner:
                raise SampleFailure(k, inner) from inner
        raise SampleFailure(start, exc) from exc


def monte_carlo(
    g,
    demand: DemandSpec,
    strategy,
    cf: CharacterizationTable,
    cfg: MCConfig,
    *,
    factor_table: FactorTable | None = None,
    table=None,
    workers: int = 1,
    chunk: int = DEFAULT_CHUNK,
    keep_samples: bool = False,
) -> MCResult:
    table = table or default_table()
    strategy = Strategy.parse(strategy)
    run_strategy = Strategy.EXPAND if strategy is Strategy.COMPARE else strategy
    notes = []
    items = uncertain_items(g, factor_table, table, notes)
    det = evaluate(g, demand, run_strategy, cf, table=table)
    jobs = [
        (g, demand, run_strategy, cf, table, items, int(cfg.seed), start, min(chunk, cfg.n - start))
        for start in range(0, cfg.n, chunk)
    ]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_or_locate, jobs))
    else:
        parts = [_chunk_or_locate(j) for j in jobs]
    cats = sorted(parts[0])
    samples = {c: np.concatenate([p[c] for p in parts]) for c in cats}
    stats = summarize(samples, cfg.quantiles)
    for c in cats:
        stats[c]["unit"] = det.impacts[c].unit.symbol
    return MCResult(
        stats=stats,
        n=cfg.n,
        seed=int(cfg.seed),
        deterministic={c: det.impacts[c].value for c in cats},
        strategy=strategy.value,
        notes=notes,
        samples=samples if keep_samples else None,
    )
