"""Parameter instantiation across a model graph.

Each node starts from its parameter defaults. Bindings on incoming edges
overwrite them with expressions evaluated in the parent's environment.
Conversion and property models (roles ``conversion``/``property``) see the
parent's *pre-conversion* environment and feed their outputs back into the
parent's parameters of the same name. All other children see the parent's
final environment.

Magnitudes are base-unit floats or numpy arrays with one entry per Monte
Carlo sample; the same code serves single evaluations and batches.
Problems are collected as :class:`Issue` records instead of being raised, so
the integrity pass can report all of them at once.
"""

from __future__ import annotations

import graphlib
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .errors import DimensionMismatch, LcaError, UnknownParameter, UnknownUnit
from .manifest import PARAM_PROVIDER_ROLES, ModelKind
from .units import UnitTable, default_table


@dataclass
class Issue:
    code: str
    node: str
    path: str
    message: str
    values: dict = field(default_factory=dict)


@dataclass
class Binding:
    source: str
    value: object
    dim: object


def same_value(a, b) -> bool:
    return bool(np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=1e-12, atol=0.0))


def ordered_outputs(body: dict):
    """Output names of a conversion body in dependency order; raises CycleError on loops."""
    ts = graphlib.TopologicalSorter()
    for name in sorted(body):
        ts.add(name, *sorted(ex.references(body[name]) & set(body)))
    return list(ts.static_order())


class Instantiation:
    def __init__(self, g, table: UnitTable | None = None, overrides=None):
        self.g = g
        self.table = table or default_table()
        self.overrides = overrides or {}
        self.issues: list = []
        self.bound: dict = {nid: {} for nid in g.ids}
        self.converted: dict = {nid: {} for nid in g.ids}
        self._pre: dict = {}
        self._final: dict = {}
        self._busy: set = set()
        for nid in g.ids:
            self.final(nid)
        self._check_mandatory()

    # environments are (mags, dims) dict pairs
    def _defaults(self, nid):
        m = self.g.manifests[nid]
        mags, dims = {}, {}
        for p in m.params:
            dims[p.name] = p.dimension
            if (nid, p.name) in self.overrides:
                mags[p.name] = self.overrides[(nid, p.name)]
            elif p.default is not None:
                mags[p.name] = p.default.base_value
        return mags, dims

    def _issue(self, code, nid, path, msg, **values):
        self.issues.append(Issue(code, nid, path, msg, values))

    def pre(self, nid):
        if nid in self._pre:
            return self._pre[nid]
        key = ("pre", nid)
        if key in self._busy:
            self._issue("TYPE_SAFETY", nid, "/params", "parameter binding cycle")
            return self._defaults(nid)
        self._busy.add(key)
        mags, dims = self._defaults(nid)
        m = self.g.manifests[nid]
        for e in self.g.in_edges(nid):
            parent = self.g.manifests[e.source]
            dep = parent.dependencies[e.dep_index]
            if not dep.bindings:
                continue
            penv = self.pre(e.source) if e.role in PARAM_PROVIDER_ROLES else self.final(e.source)
            for name, node in sorted(dep.bindings.items()):
                path = f"/dependencies/{e.dep_index}/bindings/{name}"
                spec = m.param(name)
                if spec is None:
                    self._issue(
                        "TYPE_SAFETY", e.source, path, f"binding targets undeclared parameter {nid}.{name}", target=nid
                    )
                    continue
                val = self._eval(node, penv, e.source, path)
                if val is None:
                    self.bound[nid].setdefault(name, Binding(e.source, None, None))
                    continue
                value, dim = val
                if dim != spec.dimension:
                    self._issue(
                        "UNIT_CONSISTENCY",
                        e.source,
                        path,
                        f"binding gives {nid}.{name} dimension {dim}, parameter expects {spec.dimension}",
                        target=nid,
                        bound=str(dim),
                        expected=str(spec.dimension),
                    )
                    self.bound[nid].setdefault(name, Binding(e.source, None, None))
                    continue
                prev = self.bound[nid].get(name)
                if prev is not None and prev.value is not None and not same_value(prev.value, value):
                    self._issue(
                        "TYPE_SAFETY",
                        e.source,
                        path,
                        f"{nid}.{name} is bound to different values by {prev.source} and {e.source}",
                        target=nid,
                    )
                    continue
                self.bound[nid][name] = Binding(e.source, value, dim)
                mags[name] = value
        self._busy.discard(key)
        self._pre[nid] = (mags, dims)
        return mags, dims

    def final(self, nid):
        if nid in self._final:
            return self._final[nid]
        key = ("final", nid)
        if key in self._busy:
            # loops between conversion models are reported as structural cycles
            return self.pre(nid)
        self._busy.add(key)
        mags, dims = (dict(d) for d in self.pre(nid))
        m = self.g.manifests[nid]
        for e in self.g.out_edges(nid):
            if e.role not in PARAM_PROVIDER_ROLES:
                continue
            child = self.g.manifests[e.target]
            if child.kind not in (ModelKind.PARAMETER_CONVERSION, ModelKind.PRODUCT_FLOW):
                continue
            outs = self.outputs(e.target)
            for name, (value, dim) in sorted(outs.items()):
                path = f"/dependencies/{e.dep_index}"
                spec = m.param(name)
                if spec is None:
                    self._issue(
                        "TYPE_SAFETY", nid, path, f"{e.target} outputs {name!r}, which {nid} does not declare", source=e.target
                    )
                    continue
                if dim != spec.dimension:
                    self._issue(
                        "UNIT_CONSISTENCY",
                        nid,
                        path,
                        f"{e.target} outputs {name} with dimension {dim}, {nid} expects {spec.dimension}",
                    )
                    continue
                if name in self.bound[nid] or name in self.converted[nid]:
                    self._issue("TYPE_SAFETY", nid, path, f"{nid}.{name} is set by more than one source")
                    continue
                self.converted[nid][name] = Binding(e.target, value, dim)
                mags[name] = value
        self._busy.discard(key)
        self._final[nid] = (mags, dims)
        return mags, dims

    def outputs(self, nid) -> dict:
        """Evaluated body outputs of a conversion or property model."""
        m = self.g.manifests[nid]
        if not m.body:
            return {}
        mags, dims = (dict(d) for d in self.final(nid))
        try:
            order = ordered_outputs(m.body)
        except graphlib.CycleError as exc:
            self._issue("TYPE_SAFETY", nid, "/body", f"conversion outputs reference each other cyclically: {exc.args[1]}")
            return {}
        out = {}
        for name in order:
            val = self._eval(m.body[name], (mags, dims), nid, f"/body/{name}")
            if val is None:
                continue
            out[name] = val
            mags[name], dims[name] = val
        return out

    def _eval(self, node, env, nid, path):
        mags, dims = env
        try:
            dim = ex.infer_dimension(node, dims, self.table)
        except DimensionMismatch as exc:
            self._issue("UNIT_CONSISTENCY", nid, path, str(exc))
            return None
        except (UnknownParameter, UnknownUnit) as exc:
            self._issue("TYPE_SAFETY", nid, path, str(exc))
            return None
        missing = ex.references(node) - set(mags)
        if missing:
            # unset mandatory inputs are reported once by _check_mandatory
            return None
        try:
            return ex.evaluate_base(node, mags, self.table), dim
        except LcaError as exc:
            self._issue("TYPE_SAFETY", nid, path, str(exc))
            return None

    def _check_mandatory(self):
        for nid in self.g.ids:
            mags, _ = self.final(nid)
            for p in self.g.manifests[nid].params:
                if p.mandatory and p.name not in mags and p.name not in self.bound[nid]:
                    self._issue("MANDATORY_PARAMS", nid, f"/params/{p.name}", f"mandatory parameter {nid}.{p.name} has no value")

    def env(self, nid):
        return self.final(nid)

    def evaluate(self, nid, node, path=""):
        """Evaluate an expression of node ``nid``; raises on any problem."""
        mags, dims = self.final(nid)
        dim = ex.infer_dimension(node, dims, self.table)
        return ex.evaluate_base(node, mags, self.table), dim
