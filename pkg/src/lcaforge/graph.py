"""Typed dependency graph over pinned models: lineage, cycles, taint, support level.

Edges point from a model to what it depends on, so *ancestors* are the
models a node relies on and *descendants* are the models that rely on it.
Analogic ("validated by analogy") edges are kept in the graph but carry no
taint and do not lower support unless ``strict=True``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from . import kernels
from .errors import HashMismatch, NotFound
from .manifest import EvidenceLevel, ModelKind, ModelManifest
from .registry import Advisory, Lockfile, Registry

MAX_CYCLES = 1000
_LEVELS = (EvidenceLevel.CONJECTURAL, EvidenceLevel.CALIBRATED, EvidenceLevel.MEASURED)


@dataclass(frozen=True)
class Node:
    id: str
    version: str
    hash: str
    kind: ModelKind
    evidence: EvidenceLevel


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    role: str
    analogic: bool
    dep_index: int


class DepGraph:
    def __init__(self, manifests, hashes=None):
        ms = sorted(manifests, key=lambda m: m.id)
        if len({m.id for m in ms}) != len(ms):
            raise ValueError("a graph holds one version per model id")
        self.manifests: dict = {m.id: m for m in ms}
        hashes = hashes or {}
        self.nodes: dict = {
            m.id: Node(m.id, str(m.version), hashes.get(m.id) or m.hash, m.kind, m.best_evidence()) for m in ms
        }
        seen = set()
        edges = []
        for m in ms:
            for i, d in enumerate(m.dependencies):
                if d.model_id not in self.manifests:
                    continue
                key = (m.id, d.model_id, d.role)
                if key in seen:
                    continue
                seen.add(key)
                edges.append(Edge(m.id, d.model_id, d.role, d.analogic, i))
        self.edges: list = sorted(edges, key=lambda e: (e.source, e.target, e.role))
        self.ids: list = list(self.nodes)
        self.index: dict = {nid: i for i, nid in enumerate(self.ids)}

    @classmethod
    def from_manifests(cls, manifests) -> DepGraph:
        return cls(list(manifests))

    def __contains__(self, nid):
        return nid in self.nodes

    def _check(self, nid):
        if nid not in self.nodes:
            raise NotFound(f"{nid!r} is not in the graph")

    def csr(self, *, reverse=False, include_analogic=True):
        pairs = [
            (self.index[e.target], self.index[e.source]) if reverse else (self.index[e.source], self.index[e.target])
            for e in self.edges
            if include_analogic or not e.analogic
        ]
        return kernels.to_csr(len(self.ids), pairs)

    def out_edges(self, nid, include_analogic=False):
        return [e for e in self.edges if e.source == nid and (include_analogic or not e.analogic)]

    def in_edges(self, nid, include_analogic=False):
        return [e for e in self.edges if e.target == nid and (include_analogic or not e.analogic)]

    def digraph(self, include_analogic=True) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.ids)
        g.add_edges_from((e.source, e.target) for e in self.edges if include_analogic or not e.analogic)
        return g


def build_graph(lock: Lockfile, registry: Registry) -> DepGraph:
    """Load every pin, verify its content hash and build the graph of the closure."""
    manifests = []
    for mid, ver, expected in lock.pins:
        m = registry.get(mid, ver)
        actual = m.hash
        if actual != expected:
            raise HashMismatch(f"{mid}@{ver}: lockfile pins {expected[:12]}, store holds {actual[:12]}")
        manifests.append(m)
    return DepGraph(manifests)


# ------------------------------------------------------------------ lineage


def _reach_from_successors(g: DepGraph, nid, reverse, include_analogic):
    g._check(nid)
    indptr, indices = g.csr(reverse=reverse, include_analogic=include_analogic)
    i = g.index[nid]
    succ = indices[indptr[i] : indptr[i + 1]]
    if succ.size == 0:
        return set()
    mask = kernels.reachable(indptr, indices, succ)
    return {g.ids[j] for j in np.flatnonzero(mask)}


def ancestors(g: DepGraph, nid, include_analogic=True) -> set:
    """Everything ``nid`` relies on (itself only when it sits on a cycle)."""
    return _reach_from_successors(g, nid, False, include_analogic)


def descendants(g: DepGraph, nid, include_analogic=True) -> set:
    """Everything that relies on ``nid``."""
    return _reach_from_successors(g, nid, True, include_analogic)


# ------------------------------------------------------------------- cycles


class CycleList(list):
    """Elementary cycles, each rotated to start at its smallest id.

    ``truncated`` is set when enumeration stopped at :data:`MAX_CYCLES`;
    ``components`` lists every strongly connected component that contains a cycle.
    """

    truncated = False
    components: list = []


def detect_cycles(g: DepGraph, include_analogic=False, limit=MAX_CYCLES) -> CycleList:
    dg = g.digraph(include_analogic)
    found = []
    gen = nx.simple_cycles(dg)
    for cyc in itertools.islice(gen, limit + 1):
        k = cyc.index(min(cyc))
        found.append(cyc[k:] + cyc[:k])
    out = CycleList(sorted(found[:limit]))
    out.truncated = len(found) > limit
    out.components = sorted(
        sorted(c) for c in nx.strongly_connected_components(dg) if len(c) > 1 or dg.has_edge(next(iter(c)), next(iter(c)))
    )
    return out


# -------------------------------------------------------------------- taint


@dataclass
class TaintStatus:
    tainted: bool = False
    severity: str | None = None
    advisory_id: str | None = None
    path: list = field(default_factory=list)  # node -> ... -> advisory-matched node

    def to_json(self):
        if not self.tainted:
            return {"status": "clean"}
        return {"status": "tainted", "severity": self.severity, "advisory": self.advisory_id, "path": self.path}


@dataclass
class TaintReport:
    statuses: dict

    def tainted(self, min_severity="Info") -> list:
        from .registry import SEVERITIES

        floor = SEVERITIES.index(min_severity)
        return sorted(
            nid for nid, s in self.statuses.items() if s.tainted and SEVERITIES.index(s.severity) >= floor
        )

    def to_json(self):
        return {nid: s.to_json() for nid, s in sorted(self.statuses.items())}


def matching_advisories(g: DepGraph, advisories) -> list:
    """(node id, advisory) pairs for live advisories hitting a pinned version."""
    hits = []
    for a in advisories:
        if a.superseded_by is not None:
            continue
        node = g.nodes.get(a.model_id)
        if node is not None and a.matches(node.id, node.version):
            hits.append((node.id, a))
    return sorted(hits, key=lambda h: (h[0], -h[1].rank, h[1].advisory_id))


def propagate_taint(g: DepGraph, advisories, strict=False) -> TaintReport:
    hits = matching_advisories(g, advisories)
    statuses = {nid: TaintStatus() for nid in g.ids}
    if not hits:
        return TaintReport(statuses)
    indptr, indices = g.csr(reverse=True, include_analogic=strict)
    seeds = [g.index[nid] for nid, _ in hits]
    ranks = [a.rank for _, a in hits]
    rank, parent, origin = kernels.propagate_max(indptr, indices, seeds, ranks)
    for i, nid in enumerate(g.ids):
        if rank[i] < 0:
            continue
        path = [nid]
        j = i
        while parent[j] >= 0:
            j = int(parent[j])
            path.append(g.ids[j])
        a = hits[int(origin[i])][1]
        statuses[nid] = TaintStatus(True, a.severity, a.advisory_id, path)
    return TaintReport(statuses)


# ------------------------------------------------------------ support level


def support_levels(g: DepGraph, strict=False) -> dict:
    """Weakest evidence level over each node and everything it relies on."""
    if not g.ids:
        return {}
    indptr, indices = g.csr(include_analogic=strict)
    own = [g.nodes[nid].evidence.rank for nid in g.ids]
    lows = kernels.min_over_reachable(indptr, indices, own)
    return {nid: _LEVELS[int(lows[i])] for i, nid in enumerate(g.ids)}


def support_level(g: DepGraph, nid, strict=False) -> EvidenceLevel:
    g._check(nid)
    return support_levels(g, strict)[nid]


# ------------------------------------------------------------------- export


def _dot_id(s):
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _taint_label(taint, nid):
    if taint is None or not taint.statuses[nid].tainted:
        return "clean"
    return taint.statuses[nid].severity.lower()


def to_dot(g: DepGraph, taint: TaintReport | None = None) -> str:
    lines = ["digraph lcaforge {", "  rankdir=LR;"]
    for nid in g.ids:
        n = g.nodes[nid]
        status = _taint_label(taint, nid)
        lines.append(
            f"  {_dot_id(nid)} [label={_dot_id(f'{nid}@{n.version}')}, kind={_dot_id(n.kind.value)}, taint={_dot_id(status)}];"
        )
    for e in g.edges:
        style = ", style=dashed" if e.analogic else ""
        lines.append(f"  {_dot_id(e.source)} -> {_dot_id(e.target)} [role={_dot_id(e.role)}{style}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_json(g: DepGraph, taint: TaintReport | None = None, support: dict | None = None) -> dict:
    support = support if support is not None else support_levels(g)
    nodes = []
    for nid in g.ids:
        n = g.nodes[nid]
        nodes.append(
            {
                "id": nid,
                "version": n.version,
                "hash": n.hash,
                "kind": n.kind.value,
                "evidence": n.evidence.value,
                "support": support[nid].value,
                "taint": _taint_label(taint, nid),
            }
        )
    edges = [{"from": e.source, "to": e.target, "role": e.role, "analogic": e.analogic} for e in g.edges]
    return {"nodes": nodes, "edges": edges}
