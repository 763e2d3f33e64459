"""Evaluation of a model graph for a demanded functional unit.

Each expanded product gets exactly one supplying column (a unit operation):
its production process, an allocated partition of a multi-output process,
or a virtual assembly built from the product's declared components. Process
scalings ``s`` solve ``A s = f``; on acyclic systems the same numbers come
from a top-down walk. Inventories are ``g = B s`` and impacts ``h = Q g``.

Every quantity is carried in base units as an array with one entry per
batch member, so a single code path serves deterministic runs (batch of 1)
and Monte Carlo batches.
"""

from __future__ import annotations

import graphlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources

import numpy as np

from .canonical import read_json
from .errors import (
    AllocationRequired,
    CoefficientSumError,
    ComputeError,
    ConflictingBindings,
    DimensionMismatch,
    MissingProvider,
    MissingShortcut,
    NegativeCoefficient,
    NonSquare,
    SingularSystem,
    UnknownParameter,
)
from .graph import ancestors
from .manifest import ModelKind
from .params import Instantiation
from .units import DIMENSIONLESS, Dimension, Quantity, UnitTable, default_table, quantity_from_json

ALLOCATION_TOLERANCE = 1e-9
MAX_TREE_NODES = 20000
_COND_LIMIT = 1e12


class Strategy(str, Enum):
    SHORTCUT = "Shortcut"
    EXPAND = "Expand"
    COMPARE = "Compare"

    @classmethod
    def parse(cls, text) -> Strategy:
        if isinstance(text, Strategy):
            return text
        for s in cls:
            if s.value.lower() == str(text).lower():
                return s
        raise ValueError(f"unknown strategy {text!r} (shortcut, expand or compare)")


def impact_dimension(category: str) -> Dimension:
    return Dimension({f"impact:{category}": 1})


@dataclass(frozen=True)
class DemandSpec:
    product: str
    amount: Quantity

    @classmethod
    def parse(cls, product, text, table=None) -> DemandSpec:
        return cls(product, quantity_from_json(text, table or default_table()))

    def scaled(self, alpha) -> DemandSpec:
        return DemandSpec(self.product, Quantity(self.amount.value * alpha, self.amount.unit))


# ------------------------------------------------------------ characterization


@dataclass
class CharacterizationTable:
    table_id: str
    version: str
    factors: dict  # (flow, category) -> (base value, Dimension)

    @classmethod
    def from_json(cls, doc, table: UnitTable | None = None) -> CharacterizationTable:
        table = table or default_table()
        factors = {}
        for i, f in enumerate(doc["factors"]):
            key = (f["flow"], f["category"])
            if key in factors:
                raise ValueError(f"factor {i}: duplicate entry for flow {key[0]!r}, category {key[1]!r}")
            q = quantity_from_json({"value": f["value"], "unit": f["unit"]}, table)
            if q.dimension.exponents.get(f"impact:{key[1]}") != 1:
                raise DimensionMismatch(f"factor {i}: unit {f['unit']} does not measure impact:{key[1]}")
            factors[key] = (q.base_value, q.dimension)
        return cls(str(doc["table_id"]), str(doc["version"]), factors)

    @classmethod
    def load(cls, path, table=None) -> CharacterizationTable:
        return cls.from_json(read_json(path), table)

    @property
    def categories(self) -> list:
        return sorted({c for _, c in self.factors})

    def for_flow(self, flow) -> dict:
        return {c: v for (f, c), v in sorted(self.factors.items()) if f == flow}


def synthetic_cf_table() -> CharacterizationTable:
    text = resources.files("lcaforge.data").joinpath("cf_synthetic.json").read_text(encoding="utf-8")
    return CharacterizationTable.from_json(json.loads(text))


# ---------------------------------------------------------------- processes


@dataclass
class Flow:
    target: str
    direction: str
    amount: object
    dim: Dimension
    index: int


@dataclass
class ProcessInstance:
    id: str
    technosphere: list
    biosphere: list
    mass_loss: object = None

    def _sum(self, direction):
        out = {}
        for x in self.technosphere:
            if x.direction == direction:
                out[x.target] = out.get(x.target, 0.0) + x.amount
        return dict(sorted(out.items()))

    @property
    def outputs(self) -> dict:
        return self._sum("out")

    @property
    def inputs(self) -> dict:
        return self._sum("in")


def instantiate_process(inst: Instantiation, pid, factors=None) -> ProcessInstance:
    """Evaluate every exchange of process ``pid``; ``factors`` multiplies selected amounts."""
    m = inst.g.manifests[pid]
    factors = factors or {}
    flows = {}
    for part in ("technosphere", "biosphere"):
        items = []
        for x in getattr(m.body, part):
            mag, dim = inst.evaluate(pid, x.amount)
            f = factors.get((pid, part, x.index))
            if f is not None:
                mag = mag * f
            items.append(Flow(x.target, x.direction, mag, dim, x.index))
        flows[part] = items
    loss = None
    if m.body.mass_loss is not None:
        loss = inst.evaluate(pid, m.body.mass_loss)
    return ProcessInstance(pid, flows["technosphere"], flows["biosphere"], loss)


def apply_allocation(proc: ProcessInstance, coefficients: dict) -> dict:
    """Split a multi-output process into one partition per co-product.

    Each partition keeps its own output untouched and carries the given
    share of every input and biosphere exchange.
    """
    outs = proc.outputs
    if len(outs) < 2:
        raise ComputeError(f"{proc.id}: allocation needs at least two co-products")
    if set(coefficients) != set(outs):
        raise CoefficientSumError(
            f"{proc.id}: coefficients cover {sorted(coefficients)}, co-products are {sorted(outs)}"
        )
    arrs = {k: np.asarray(v, dtype=float) for k, v in coefficients.items()}
    for k, c in sorted(arrs.items()):
        if np.any(c < 0):
            raise NegativeCoefficient(f"{proc.id}: coefficient for {k} is negative ({np.min(c)!r})")
    total = sum(arrs[k] for k in sorted(arrs))
    if np.max(np.abs(total - 1.0)) > ALLOCATION_TOLERANCE:
        raise CoefficientSumError(f"{proc.id}: coefficients sum to {np.max(total)!r}, expected 1")
    parts = {}
    for cp in sorted(outs):
        c = coefficients[cp]
        tech = [x for x in proc.technosphere if x.direction == "out" and x.target == cp]
        tech += [Flow(x.target, x.direction, x.amount * c, x.dim, x.index) for x in proc.technosphere if x.direction == "in"]
        bio = [Flow(x.target, x.direction, x.amount * c, x.dim, x.index) for x in proc.biosphere]
        parts[cp] = ProcessInstance(f"{proc.id}[{cp}]", tech, bio)
    return parts


def mass_based_coefficients(masses: dict) -> dict:
    total = sum(masses[k] for k in sorted(masses))
    if total <= 0:
        raise CoefficientSumError("co-product masses must have a positive total")
    return {k: masses[k] / total for k in sorted(masses)}


# ------------------------------------------------------------------- system


@dataclass
class Column:
    id: str
    source: str
    product: str
    output: np.ndarray
    inputs: dict  # product -> amount per unit operation
    biosphere: list  # Flow
    shortcut: dict | None = None  # category -> impact per unit operation


@dataclass
class System:
    root: str
    demand: np.ndarray
    columns: dict  # supplied product -> Column
    shortcuts: dict  # product -> {category: impact per base unit}
    cut_offs: list
    batch: int

    @property
    def products(self) -> list:
        return sorted(self.columns)

    def is_acyclic(self) -> bool:
        try:
            self._order()
        except graphlib.CycleError:
            return False
        return True

    def _order(self):
        ts = graphlib.TopologicalSorter()
        for p in self.products:
            ts.add(p)
            for q in self.columns[p].inputs:
                if q in self.columns:
                    ts.add(q, p)
        return list(ts.static_order())


def raise_for_issues(inst: Instantiation, nodes=None):
    """Raise the first instantiation issue, optionally only those recorded on ``nodes``."""
    for i in inst.issues:
        if nodes is not None and i.node not in nodes:
            continue
        where = f"{i.node} {i.path}: {i.message}"
        if i.code == "UNIT_CONSISTENCY":
            raise DimensionMismatch(where)
        if i.code == "MANDATORY_PARAMS":
            raise UnknownParameter(where)
        if "bound to different values" in i.message or "more than one source" in i.message:
            raise ConflictingBindings(where)
        raise ComputeError(where)


class _Builder:
    def __init__(self, g, inst, table, strategy, node_strategy, factors, batch):
        self.g = g
        self.inst = inst
        self.table = table
        self.strategy = strategy
        self.node_strategy = node_strategy or {}
        self.factors = factors or {}
        self.batch = batch
        self.columns = {}
        self.shortcuts = {}
        self.cut_offs = {}

    def arr(self, x):
        return np.array(np.broadcast_to(np.asarray(x, dtype=float), (self.batch,)))

    def mode(self, nid):
        return Strategy.parse(self.node_strategy.get(nid, self.strategy))

    def ref_dim(self, pid):
        return self.g.manifests[pid].body.reference_unit.dimension

    def dep_targets(self, nid, role):
        return sorted(
            d.model_id for d in self.g.manifests[nid].deps_with_role(role) if d.model_id in self.g and not d.cut_off
        )

    def cut(self, consumer, product):
        for d in self.g.manifests[consumer].dependencies:
            if d.model_id == product and d.cut_off:
                self.cut_offs[(consumer, product)] = d.cut_off
                return True
        return False

    def rates(self, sc_id, owner, ref_dim):
        out = {}
        for cat, node in sorted(self.g.manifests[sc_id].body.items()):
            mag, dim = self.inst.evaluate(sc_id, node)
            want = impact_dimension(cat) / ref_dim
            if dim != want:
                raise DimensionMismatch(f"{sc_id}: {cat} has dimension {dim}, expected {want} for {owner}")
            out[cat] = self.arr(mag)
        return out

    def build(self, root):
        m = self.g.manifests.get(root)
        if m is None or m.kind is not ModelKind.PRODUCT:
            raise MissingProvider(f"demanded product {root!r} is not a Product in the graph")
        if self.mode(root) is Strategy.SHORTCUT and not self.dep_targets(root, "shortcut"):
            procs = self.dep_targets(root, "production")
            if not (procs and self.dep_targets(procs[0], "shortcut")):
                raise MissingShortcut(f"{root} has no impact model to shortcut with")
        todo, seen = [root], {root}
        while todo:
            pid = todo.pop()
            for q in self.product(pid):
                if q not in seen:
                    seen.add(q)
                    todo.append(q)

    def product(self, pid):
        m = self.g.manifests.get(pid)
        if m is None or m.kind is not ModelKind.PRODUCT:
            raise MissingProvider(f"{pid!r} is consumed but is not a Product in the graph")
        sc = self.dep_targets(pid, "shortcut")
        if self.mode(pid) is Strategy.SHORTCUT and sc:
            self.shortcuts[pid] = self.rates(sc[0], pid, self.ref_dim(pid))
            return []
        procs = self.dep_targets(pid, "production")
        if len(procs) > 1:
            raise ComputeError(f"{pid} names several production processes: {procs}")
        if procs:
            col = self.process_column(procs[0], pid)
        elif m.body.components:
            col = self.component_column(pid)
        else:
            raise MissingProvider(f"{pid} has no production process, components or usable shortcut")
        self.columns[pid] = col
        return sorted(col.inputs)

    def check_product_dim(self, owner, product, dim):
        want = self.ref_dim(product)
        if dim != want:
            raise DimensionMismatch(f"{owner}: exchange of {product} has dimension {dim}, product measures {want}")

    def process_column(self, proc_id, pid):
        if self.g.manifests[proc_id].kind is not ModelKind.PROCESS:
            raise ComputeError(f"{pid}: production dependency {proc_id} is not a Process")
        proc = instantiate_process(self.inst, proc_id, self.factors)
        for x in proc.technosphere:
            if x.target in self.g and self.g.manifests[x.target].kind is ModelKind.PRODUCT:
                self.check_product_dim(proc_id, x.target, x.dim)
        outs = proc.outputs
        if pid not in outs:
            raise ComputeError(f"{proc_id} does not output {pid}")
        cid = proc_id
        part = proc
        if len(outs) > 1:
            allocs = self.dep_targets(proc_id, "allocation")
            if not allocs:
                raise AllocationRequired(f"{proc_id} has co-products {sorted(outs)} but no allocation model")
            coefs = {}
            for cp, node in sorted(self.g.manifests[allocs[0]].body.items()):
                mag, dim = self.inst.evaluate(allocs[0], node)
                if dim != DIMENSIONLESS:
                    raise DimensionMismatch(f"{allocs[0]}: coefficient for {cp} must be dimensionless, got {dim}")
                coefs[cp] = mag
            part = apply_allocation(proc, coefs)[pid]
            cid = part.id
        output = self.arr(part.outputs[pid])
        if np.any(output <= 0):
            raise ComputeError(f"{proc_id}: reference output of {pid} must be positive")
        psc = self.dep_targets(proc_id, "shortcut")
        if self.mode(proc_id) is Strategy.SHORTCUT and psc:
            rates = self.rates(psc[0], proc_id, self.ref_dim(pid))
            return Column(cid, proc_id, pid, output, {}, [], {c: r * output for c, r in rates.items()})
        inputs = {}
        for q, amount in part.inputs.items():
            if self.cut(proc_id, q):
                continue
            if q not in self.g:
                raise MissingProvider(f"{proc_id} consumes {q!r}, which is neither pinned nor cut off")
            inputs[q] = self.arr(amount)
        bio = [Flow(x.target, x.direction, self.arr(x.amount), x.dim, x.index) for x in part.biosphere]
        return Column(cid, proc_id, pid, output, inputs, bio)

    def component_column(self, pid):
        m = self.g.manifests[pid]
        inputs = {}
        for q, node in sorted(m.body.components.items()):
            if self.cut(pid, q):
                continue
            if q not in self.g:
                raise MissingProvider(f"{pid} lists component {q!r}, which is neither pinned nor cut off")
            mag, dim = self.inst.evaluate(pid, node)
            self.check_product_dim(pid, q, dim)
            inputs[q] = self.arr(mag)
        return Column(pid, pid, pid, self.arr(m.body.reference_unit.scale), inputs, [])


def build_system(
    g,
    demand: DemandSpec,
    strategy=Strategy.EXPAND,
    *,
    table: UnitTable | None = None,
    node_strategy=None,
    inst: Instantiation | None = None,
    exchange_factors=None,
    batch: int = 1,
) -> System:
    table = table or default_table()
    if inst is None:
        inst = Instantiation(g, table)
    raise_for_issues(inst, relevant_nodes(g, demand.product))
    b = _Builder(g, inst, table, Strategy.parse(strategy), node_strategy, exchange_factors, batch)
    b.build(demand.product)
    want = b.ref_dim(demand.product)
    if demand.amount.dimension != want:
        raise DimensionMismatch(f"demand {demand.amount} does not match {demand.product} reference dimension {want}")
    cut = [{"consumer": c, "product": p, "justification": j} for (c, p), j in sorted(b.cut_offs.items())]
    return System(demand.product, b.arr(demand.amount.base_value), b.columns, b.shortcuts, cut, batch)


def relevant_nodes(g, root) -> set:
    """The demanded node and everything it relies on."""
    if root not in g:
        return {root}
    return {root} | ancestors(g, root, include_analogic=False)


# ------------------------------------------------------------------ scaling


def solve_scaling(A, f) -> np.ndarray:
    """Solve the batched square system ``A s = f`` with shapes (B, n, n) and (B, n)."""
    A = np.asarray(A, dtype=float)
    f = np.asarray(f, dtype=float)
    if A.ndim == 2:
        return solve_scaling(A[None], f[None])[0]
    if A.shape[-1] != A.shape[-2]:
        raise NonSquare(f"technosphere matrix is {A.shape[-2]}x{A.shape[-1]}")
    if A.shape[-1] == 0:
        return np.zeros(f.shape)
    if not np.all(np.isfinite(A)) or np.any(np.linalg.cond(A) > _COND_LIMIT):
        raise SingularSystem("technosphere matrix has no unique solution")
    try:
        return np.linalg.solve(A, f[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc


def technosphere_matrix(sysm: System):
    """``A`` (B, n, n), demand vector ``f`` (B, n) and the product order."""
    prods = sysm.products
    idx = {p: i for i, p in enumerate(prods)}
    n, B = len(prods), sysm.batch
    A = np.zeros((B, n, n))
    f = np.zeros((B, n))
    for j, p in enumerate(prods):
        col = sysm.columns[p]
        A[:, j, j] += col.output
        for q, amt in col.inputs.items():
            if q in idx:
                A[:, idx[q], j] -= amt
    if sysm.root in idx:
        f[:, idx[sysm.root]] = sysm.demand
    return A, f, prods


def _tree_scaling(sysm: System) -> dict:
    need = {p: np.zeros(sysm.batch) for p in sysm.products}
    need[sysm.root] = sysm.demand.copy()
    s = {}
    for p in sysm._order():
        col = sysm.columns[p]
        s[p] = need[p] / col.output
        for q, amt in col.inputs.items():
            if q in need:
                need[q] = need[q] + s[p] * amt
    return s


def scale(sysm: System, method=None) -> dict:
    """Scaling per supplied product; ``method`` is ``"tree"``, ``"matrix"`` or None (pick)."""
    if sysm.root not in sysm.columns:
        return {}
    if method is None:
        method = "tree" if sysm.is_acyclic() else "matrix"
    if method == "tree":
        if not sysm.is_acyclic():
            raise ComputeError("tree scaling needs an acyclic technosphere")
        return _tree_scaling(sysm)
    A, f, prods = technosphere_matrix(sysm)
    sol = solve_scaling(A, f)
    return {p: sol[:, i] for i, p in enumerate(prods)}


def scale_processes(g, demand: DemandSpec, method=None, **kw) -> dict:
    """Scaling of each unit operation (keyed by column id) needed to meet ``demand``."""
    sysm = build_system(g, demand, **kw)
    s = scale(sysm, method)
    return {sysm.columns[p].id: float(v[0]) for p, v in sorted(s.items())}


def shortcut_demand(sysm: System, s: dict) -> dict:
    d = {p: np.zeros(sysm.batch) for p in sorted(sysm.shortcuts)}
    if sysm.root in d:
        d[sysm.root] = sysm.demand.copy()
    for p in sysm.products:
        for q, amt in sysm.columns[p].inputs.items():
            if q in d:
                d[q] = d[q] + s[p] * amt
    return d


# ---------------------------------------------------------------- inventory


@dataclass
class InventoryResult:
    amounts: dict  # flow -> (B,) base-unit array
    dims: dict  # flow -> Dimension
    scaling: dict  # column id -> (B,) array

    def quantity(self, flow, k=0, table=None) -> Quantity:
        unit = (table or default_table()).base_unit(self.dims[flow])
        return Quantity(float(self.amounts[flow][k]), unit)

    def to_json(self, table=None):
        table = table or default_table()
        return {
            "flows": {f: self.quantity(f, table=table).to_json() for f in sorted(self.amounts)},
            "scaling": {c: float(v[0]) for c, v in sorted(self.scaling.items())},
        }


def aggregate_biosphere(sysm: System, s: dict) -> InventoryResult:
    amounts, dims = {}, {}
    cols = sorted((sysm.columns[p] for p in s), key=lambda c: c.id)
    for col in cols:
        sj = s[col.product]
        for x in sorted(col.biosphere, key=lambda x: x.index):
            if x.target in dims and dims[x.target] != x.dim:
                raise DimensionMismatch(f"flow {x.target} appears with dimensions {dims[x.target]} and {x.dim}")
            dims[x.target] = x.dim
            amounts[x.target] = amounts.get(x.target, 0.0) + sj * x.amount
    scaling = {sysm.columns[p].id: v for p, v in s.items()}
    batch = sysm.batch
    amounts = {f: np.array(np.broadcast_to(a, (batch,))) for f, a in sorted(amounts.items())}
    return InventoryResult(amounts, dict(sorted(dims.items())), dict(sorted(scaling.items())))


def _factor(cf: CharacterizationTable, flow, cat, flow_dim):
    value, dim = cf.factors[(flow, cat)]
    want = impact_dimension(cat) / flow_dim
    if dim != want:
        raise DimensionMismatch(f"factor {flow}->{cat} has dimension {dim}, flow needs {want}")
    return value


def characterize_arrays(inv: InventoryResult, cf: CharacterizationTable, batch=1):
    cats = cf.categories
    h = {c: np.zeros(batch) for c in cats}
    unchar = []
    for flow in sorted(inv.amounts):
        hit = False
        for cat in cats:
            if (flow, cat) in cf.factors:
                hit = True
                h[cat] = h[cat] + inv.amounts[flow] * _factor(cf, flow, cat, inv.dims[flow])
        if not hit:
            unchar.append(flow)
    return h, unchar


def characterize(inv: InventoryResult, cf: CharacterizationTable, table=None) -> ImpactResult:
    batch = len(next(iter(inv.amounts.values()))) if inv.amounts else 1
    h, unchar = characterize_arrays(inv, cf, batch)
    return ImpactResult(
        impacts=_quantities(h, table),
        strategy=None,
        inventory=inv,
        uncharacterized=unchar,
    )


def _quantities(h: dict, table=None, k=0) -> dict:
    table = table or default_table()
    return {c: Quantity(float(v[k]), table.base_unit(impact_dimension(c))) for c, v in sorted(h.items())}


# ------------------------------------------------------------ contributions


def _direct_rates(col: Column, cf: CharacterizationTable, cats) -> dict:
    """Impact per unit operation of a column, per category."""
    if col.shortcut is not None:
        return {c: col.shortcut.get(c, 0.0) for c in cats}
    out = {c: 0.0 for c in cats}
    for x in sorted(col.biosphere, key=lambda x: x.index):
        for c in cats:
            if (x.target, c) in cf.factors:
                out[c] = out[c] + x.amount * _factor(cf, x.target, c, x.dim)
    return out


def _scalar(v):
    return float(np.asarray(v).reshape(-1)[0])


def contribution_tree(sysm: System, s: dict, cf: CharacterizationTable, cats) -> dict:
    """Per-node direct and subtree impacts; unfolded from the root when acyclic, flat otherwise."""
    rates = {p: {c: _scalar(v) for c, v in _direct_rates(sysm.columns[p], cf, cats).items()} for p in sysm.products}
    sc = {p: {c: _scalar(sysm.shortcuts[p].get(c, 0.0)) for c in cats} for p in sysm.shortcuts}
    budget = [MAX_TREE_NODES]

    def total_of(children, direct):
        t = dict(direct)
        for ch in children:
            for c in cats:
                t[c] += ch["total"][c]
        return t

    def product_node(p, qty):
        budget[0] -= 1
        if budget[0] < 0:
            raise _TooBig
        if p in sc:
            direct = {c: qty * sc[p][c] for c in cats}
            return {"id": p, "kind": "shortcut", "amount": qty, "direct": direct, "total": dict(direct), "children": []}
        col = sysm.columns[p]
        sj = qty / _scalar(col.output)
        budget[0] -= 1
        kids = [product_node(q, sj * _scalar(a)) for q, a in sorted(col.inputs.items())]
        direct = {c: sj * rates[p][c] for c in cats}
        proc = {"id": col.id, "kind": "process", "scaling": sj, "direct": direct, "total": total_of(kids, direct), "children": kids}
        zero = {c: 0.0 for c in cats}
        return {"id": p, "kind": "product", "amount": qty, "direct": zero, "total": dict(proc["total"]), "children": [proc]}

    root_qty = _scalar(sysm.demand)
    if sysm.is_acyclic():
        try:
            return product_node(sysm.root, root_qty)
        except _TooBig:
            pass
    kids = []
    for p in sysm.products:
        col = sysm.columns[p]
        direct = {c: _scalar(s[p]) * rates[p][c] for c in cats}
        kids.append({"id": col.id, "kind": "process", "scaling": _scalar(s[p]), "direct": direct, "total": dict(direct), "children": []})
    sd = shortcut_demand(sysm, s)
    for p in sorted(sc):
        direct = {c: _scalar(sd[p]) * sc[p][c] for c in cats}
        kids.append({"id": p, "kind": "shortcut", "amount": _scalar(sd[p]), "direct": direct, "total": dict(direct), "children": []})
    zero = {c: 0.0 for c in cats}
    return {"id": sysm.root, "kind": "product", "amount": root_qty, "direct": zero, "total": total_of(kids, zero), "children": kids}


class _TooBig(Exception):
    pass


def leaf_sums(tree: dict) -> dict:
    """Sum of ``direct`` over every node of a contribution tree."""
    out = dict(tree["direct"])
    for ch in tree["children"]:
        for c, v in leaf_sums(ch).items():
            out[c] = out.get(c, 0.0) + v
    return out


# ------------------------------------------------------------------ results


@dataclass
class ImpactResult:
    impacts: dict  # category -> Quantity
    strategy: Strategy | None
    inventory: InventoryResult | None = None
    contributions: dict | None = None
    deviation: dict | None = None
    shortcut_impacts: dict | None = None
    uncharacterized: list = field(default_factory=list)
    cut_offs: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def values(self) -> dict:
        return {c: q.value for c, q in self.impacts.items()}

    def to_json(self, table=None) -> dict:
        doc = {
            "strategy": None if self.strategy is None else self.strategy.value,
            "impacts": {c: q.to_json() for c, q in sorted(self.impacts.items())},
            "uncharacterized": list(self.uncharacterized),
            "cut_offs": list(self.cut_offs),
            "metadata": self.metadata,
            "contributions": self.contributions,
        }
        if self.inventory is not None:
            doc["inventory"] = self.inventory.to_json(table)
        if self.deviation is not None:
            doc["deviation"] = {c: (None if math.isinf(v) else v) for c, v in sorted(self.deviation.items())}
            doc["shortcut_impacts"] = {c: q.to_json() for c, q in sorted(self.shortcut_impacts.items())}
        return doc


@dataclass
class _Run:
    impacts: dict  # category -> (B,)
    system: System
    scaling: dict
    inventory: InventoryResult
    uncharacterized: list


def run_arrays(g, demand, strategy, cf, *, table=None, node_strategy=None, inst=None, exchange_factors=None, batch=1):
    """One evaluation pass returning per-category (B,) arrays plus intermediate results."""
    sysm = build_system(
        g,
        demand,
        strategy,
        table=table,
        node_strategy=node_strategy,
        inst=inst,
        exchange_factors=exchange_factors,
        batch=batch,
    )
    s = scale(sysm)
    inv = aggregate_biosphere(sysm, s)
    h, unchar = characterize_arrays(inv, cf, batch)
    sd = shortcut_demand(sysm, s)
    extra = {}
    for p in sorted(sd):
        for c, rate in sorted(sysm.shortcuts[p].items()):
            extra[c] = extra.get(c, 0.0) + sd[p] * rate
    for p in sysm.products:
        col = sysm.columns[p]
        for c, rate in sorted((col.shortcut or {}).items()):
            extra[c] = extra.get(c, 0.0) + s[p] * rate
    for c in sorted(extra):
        h[c] = h.get(c, np.zeros(batch)) + extra[c]
    return _Run(dict(sorted(h.items())), sysm, s, inv, unchar)


def _handprint(g, inst: Instantiation, root, table) -> dict:
    out = {}
    for d in g.manifests[root].deps_with_role("handprint"):
        if d.model_id not in g:
            continue
        body = g.manifests[d.model_id].body
        (sv, sdim), (rv, rdim) = (inst.evaluate(d.model_id, body[k]) for k in ("service", "resource"))
        sv, rv = _scalar(sv), _scalar(rv)
        entry = {
            "service": Quantity(sv, table.base_unit(sdim)).to_json(),
            "resource": Quantity(rv, table.base_unit(rdim)).to_json(),
        }
        if rv != 0:
            entry["ratio"] = Quantity(sv / rv, table.base_unit(sdim / rdim)).to_json()
        out[d.model_id] = entry
    return out


def evaluate(
    g,
    demand: DemandSpec,
    strategy=Strategy.EXPAND,
    cf: CharacterizationTable | None = None,
    *,
    table: UnitTable | None = None,
    node_strategy=None,
) -> ImpactResult:
    """Deterministic evaluation of ``demand`` on graph ``g``."""
    table = table or default_table()
    cf = cf if cf is not None else synthetic_cf_table()
    strategy = Strategy.parse(strategy)
    inst = Instantiation(g, table)
    raise_for_issues(inst, relevant_nodes(g, demand.product))
    main = Strategy.EXPAND if strategy is Strategy.COMPARE else strategy
    run = run_arrays(g, demand, main, cf, table=table, node_strategy=node_strategy, inst=inst)
    cats = sorted(run.impacts)
    tree = contribution_tree(run.system, run.scaling, cf, cats) if run.system.root in run.system.columns or run.system.shortcuts else None
    res = ImpactResult(
        impacts=_quantities(run.impacts, table),
        strategy=strategy,
        inventory=run.inventory,
        contributions=tree,
        uncharacterized=run.uncharacterized,
        cut_offs=run.system.cut_offs,
    )
    hp = _handprint(g, inst, demand.product, table)
    if hp:
        res.metadata["handprint"] = hp
    if strategy is Strategy.COMPARE:
        short = run_arrays(g, demand, Strategy.SHORTCUT, cf, table=table, inst=inst)
        every = sorted(set(run.impacts) | set(short.impacts))
        zero = np.zeros(1)
        ex = {c: run.impacts.get(c, zero) for c in every}
        sc = {c: short.impacts.get(c, zero) for c in every}
        res.impacts = _quantities(ex, table)
        res.shortcut_impacts = _quantities(sc, table)
        res.deviation = {c: relative_deviation(_scalar(sc[c]), _scalar(ex[c])) for c in every}
    return res


def relative_deviation(shortcut: float, expanded: float) -> float:
    if expanded == 0:
        return 0.0 if shortcut == 0 else math.inf
    return abs(shortcut - expanded) / abs(expanded)
