"""Two-pass validation: stage manifests, then check a pinned graph against a rule set.

Pass 1 (:func:`pass1_load`) parses every source it is given and keeps going
past broken files. Pass 2 (:func:`pass2_check`) instantiates parameters
across the graph, runs each enabled rule and returns a hash-chained
:class:`ValidationRecord`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import expr as ex
from .canonical import digest, now_iso, read_json, write_canonical
from .compute import (
    ALLOCATION_TOLERANCE,
    CharacterizationTable,
    DemandSpec,
    Strategy,
    evaluate,
    impact_dimension,
    instantiate_process,
    relative_deviation,
)
from .errors import DimensionMismatch, HashMismatch, LcaError, NotFound, SchemaError, UnknownParameter, UnknownUnit
from .graph import DepGraph, detect_cycles, descendants, matching_advisories
from .manifest import ModelKind, Scope, check_taxonomy_grammar, parse_manifest
from .params import Instantiation
from .registry import Lockfile, Registry
from .units import DIMENSIONLESS, Dimension, Quantity, default_table
from .violation import RULE_CODES, Violation

SEVERITY_LEVELS = ("Error", "Warning")
MASS = Dimension({"mass": 1})
_EPS = 1e-12


# ------------------------------------------------------------------ rule sets


@dataclass(frozen=True)
class Rule:
    code: str
    severity: str = "Error"
    params: dict = field(default_factory=dict)


@dataclass
class RuleSet:
    ruleset_id: str
    version: str
    rules: list
    base_dir: Path | None = None

    def __post_init__(self):
        codes = [r.code for r in self.rules]
        if len(set(codes)) != len(codes):
            raise ValueError("rule codes must be unique within a rule set")
        for r in self.rules:
            if r.code not in RULE_CODES:
                raise ValueError(f"unknown rule code {r.code!r}")
            if r.severity not in SEVERITY_LEVELS:
                raise ValueError(f"{r.code}: severity is Error or Warning")

    @classmethod
    def from_json(cls, doc, base_dir=None) -> RuleSet:
        rules = [Rule(r["code"], r.get("severity", "Error"), dict(r.get("params") or {})) for r in doc["rules"]]
        return cls(str(doc["ruleset_id"]), str(doc["version"]), rules, None if base_dir is None else Path(base_dir))

    @classmethod
    def load(cls, path) -> RuleSet:
        path = Path(path)
        return cls.from_json(read_json(path), path.parent)

    def rule(self, code) -> Rule | None:
        for r in self.rules:
            if r.code == code:
                return r
        return None

    def with_severity(self, code, severity) -> RuleSet:
        rules = [Rule(r.code, severity, r.params) if r.code == code else r for r in self.rules]
        return RuleSet(self.ruleset_id, self.version, rules, self.base_dir)

    def only(self, codes) -> RuleSet:
        return RuleSet(self.ruleset_id, self.version, [r for r in self.rules if r.code in codes], self.base_dir)


def default_ruleset() -> RuleSet:
    data = resources.files("lcaforge.data")
    doc = json.loads(data.joinpath("ruleset_default.json").read_text(encoding="utf-8"))
    return RuleSet.from_json(doc, Path(str(data)))


# --------------------------------------------------------------------- pass 1


@dataclass(frozen=True)
class StagedModel:
    manifest: object
    source: str
    hash: str


@dataclass(frozen=True)
class LoadError:
    source: str
    message: str


class StagingStore:
    def __init__(self):
        self.entries: dict = {}
        self.errors: list = []

    def __len__(self):
        return len(self.entries)

    def add(self, manifest, source=""):
        key = manifest.key
        h = manifest.hash
        prev = self.entries.get(key)
        if prev is not None and prev.hash != h:
            self.errors.append(LoadError(source, f"{key[0]}@{key[1]} already staged from {prev.source} with other content"))
            return
        if prev is None:
            self.entries[key] = StagedModel(manifest, source, h)

    def get(self, mid, version) -> StagedModel:
        try:
            return self.entries[(mid, str(version))]
        except KeyError:
            raise NotFound(f"{mid}@{version} is not staged") from None

    @classmethod
    def from_registry(cls, registry: Registry, lock: Lockfile) -> StagingStore:
        store = cls()
        for mid, ver, _ in lock.pins:
            store.add(registry.get(mid, ver), f"registry:{mid}@{ver}")
        return store


def _source_files(paths):
    files = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            files.extend(sorted(x for x in p.rglob("*.lcam.json") if x.is_file()))
        else:
            files.append(p)
    return sorted(set(files), key=lambda x: str(x))


def pass1_load(paths, table=None) -> StagingStore:
    """Parse every manifest under ``paths``; failures are collected, not raised."""
    store = StagingStore()
    for f in _source_files(paths):
        try:
            m = parse_manifest(f.read_bytes(), table)
        except SchemaError as exc:
            store.errors.append(LoadError(str(f), f"{exc.path}: {exc}"))
            continue
        except (LcaError, ValueError, OSError) as exc:
            store.errors.append(LoadError(str(f), str(exc)))
            continue
        store.add(m, str(f))
    return store


# ---------------------------------------------------------------- scope rules


def check_scope_compat(
    consumer: Scope,
    provider: Scope,
    bindings=None,
    required_tags=frozenset(),
    *,
    consumer_id="",
    version="",
    path="",
    provider_id="",
    severity=None,
) -> list:
    """Scope violations for a consumer relying on a provider.

    ``bindings`` maps provider parameter names to bound values (Quantity or
    base-unit float); they are checked against the provider's operating ranges.
    ``severity`` optionally maps rule codes to severities.
    """
    severity = severity or {}
    out = []

    def add(code, msg, **values):
        out.append(Violation(code, msg, consumer_id, version, path, severity.get(code, "Error"), values))

    (a0, a1), (b0, b1) = consumer.temporal, provider.temporal
    if max(a0, b0) > min(a1, b1):
        add(
            "SCOPE_TEMPORAL",
            f"temporal scope [{a0}, {a1}] does not overlap {provider_id} [{b0}, {b1}]",
            consumer=[a0, a1],
            provider=[b0, b1],
        )
    if "GLO" not in provider.geographic and not consumer.geographic <= provider.geographic:
        add(
            "SCOPE_GEOGRAPHIC",
            f"geographic scope {sorted(consumer.geographic)} is not covered by {provider_id} {sorted(provider.geographic)}",
            consumer=sorted(consumer.geographic),
            provider=sorted(provider.geographic),
        )
    missing = set(required_tags) - provider.technological
    if missing:
        add(
            "SCOPE_TECHNOLOGICAL",
            f"{provider_id} lacks required technology tags {sorted(missing)}",
            missing=sorted(missing),
            provider=sorted(provider.technological),
        )
    for name, value in sorted((bindings or {}).items()):
        rng = provider.operating_ranges.get(name)
        if rng is None or value is None:
            continue
        v = value.base_value if isinstance(value, Quantity) else float(np.asarray(value).reshape(-1)[0])
        lo, hi = rng
        if v < lo.base_value - _EPS * abs(lo.base_value) or v > hi.base_value + _EPS * abs(hi.base_value):
            unit = lo.unit
            add(
                "SCOPE_OPERATING_RANGE",
                f"{provider_id}.{name} bound to {v / unit.scale:g} {unit.symbol}, outside operating range "
                f"[{lo.value:g}, {hi.to(unit).value:g}] {unit.symbol}",
                parameter=name,
                value=v / unit.scale,
                unit=unit.symbol,
                range=[lo.value, hi.to(unit).value],
            )
    return out


def check_mass_balance(proc, tolerance=0.01, *, model_id="", version="", severity="Error") -> list:
    """Mass conservation over a process instance's exchanges.

    Processes without mass on both the input and the output side are skipped.
    """
    ins = outs = 0.0
    for x in list(proc.technosphere) + list(proc.biosphere):
        if x.dim != MASS:
            continue
        amt = float(np.asarray(x.amount).reshape(-1)[0])
        if x.direction == "in":
            ins += amt
        else:
            outs += amt
    if ins <= 0 or outs <= 0:
        return []
    loss = 0.0
    if proc.mass_loss is not None:
        loss = float(np.asarray(proc.mass_loss[0]).reshape(-1)[0])
    gap = ins - outs - loss
    if abs(gap) <= tolerance * ins:
        return []
    return [
        Violation(
            "MASS_BALANCE",
            f"mass in {ins:g} kg, out {outs:g} kg, declared loss {loss:g} kg: imbalance {gap:g} kg exceeds {tolerance:g} of inputs",
            model_id,
            version,
            "/body",
            severity,
            {"mass_in": ins, "mass_out": outs, "declared_loss": loss, "tolerance": tolerance},
        )
    ]


# ------------------------------------------------------------------ records


def _record_hash(lockfile_hash, ruleset, violations) -> str:
    return digest(
        {
            "lockfile_hash": lockfile_hash,
            "ruleset": {"id": ruleset[0], "version": ruleset[1]},
            "violations": [v.to_json() for v in violations],
        }
    )


@dataclass
class ValidationRecord:
    lockfile_hash: str
    ruleset: tuple  # (id, version)
    timestamp: str
    violations: list
    status: str
    record_hash: str

    @classmethod
    def create(cls, lockfile_hash, ruleset, violations, timestamp=None) -> ValidationRecord:
        status = "Fail" if any(v.severity == "Error" for v in violations) else "Pass"
        return cls(
            lockfile_hash,
            tuple(ruleset),
            timestamp or now_iso(),
            list(violations),
            status,
            _record_hash(lockfile_hash, ruleset, violations),
        )

    def to_json(self) -> dict:
        return {
            "lockfile_hash": self.lockfile_hash,
            "ruleset": {"id": self.ruleset[0], "version": self.ruleset[1]},
            "timestamp": self.timestamp,
            "violations": [v.to_json() for v in self.violations],
            "status": self.status,
            "record_hash": self.record_hash,
        }

    @classmethod
    def from_json(cls, doc) -> ValidationRecord:
        return cls(
            doc["lockfile_hash"],
            (doc["ruleset"]["id"], doc["ruleset"]["version"]),
            doc["timestamp"],
            [Violation.from_json(v) for v in doc["violations"]],
            doc["status"],
            doc["record_hash"],
        )

    def save(self, path):
        write_canonical(path, self.to_json())

    @classmethod
    def load(cls, path) -> ValidationRecord:
        return cls.from_json(read_json(path))


def record_path(lock_path) -> Path:
    """``<dir>/<name>.lcavalid.json`` for a lockfile ``<dir>/<name>.<ext...>``."""
    p = Path(lock_path)
    return p.with_name(p.name.split(".")[0] + ".lcavalid.json")


def verify_record(rec: ValidationRecord, lock: Lockfile | None = None) -> bool:
    if rec.record_hash != _record_hash(rec.lockfile_hash, rec.ruleset, rec.violations):
        return False
    expected = "Fail" if any(v.severity == "Error" for v in rec.violations) else "Pass"
    if rec.status != expected:
        return False
    return lock is None or lock.hash == rec.lockfile_hash


# -------------------------------------------------------------------- pass 2


class _Checker:
    def __init__(self, g: DepGraph, rules: RuleSet, inst: Instantiation, advisories, cf):
        self.g = g
        self.rules = rules
        self.inst = inst
        self.advisories = advisories
        self.cf = cf
        self.out = []

    def on(self, code):
        return self.rules.rule(code) is not None

    def sev(self, code):
        return self.rules.rule(code).severity

    def add(self, code, nid, path, msg, severity=None, **values):
        if not self.on(code):
            return
        ver = self.g.nodes[nid].version if nid in self.g else ""
        self.out.append(Violation(code, msg, nid, ver, path, severity or self.sev(code), values))

    def run(self):
        self.instantiation()
        for nid in self.g.ids:
            self.expressions(nid)
            self.taxonomy(nid)
        self.ranges()
        self.scopes()
        self.allocation()
        self.mass_balance()
        self.shortcuts()
        self.cycles()
        self.advisory()
        seen, uniq = set(), []
        for v in sorted(self.out, key=Violation.sort_key):
            k = (v.rule_code, v.model_id, v.path, v.message)
            if k not in seen:
                seen.add(k)
                uniq.append(v)
        return uniq

    # --- parameters and expressions

    def instantiation(self):
        for i in self.inst.issues:
            self.add(i.code, i.node, i.path, i.message, **{k: v for k, v in i.values.items() if isinstance(v, str)})

    def _infer(self, nid, node, path, dims=None):
        try:
            return ex.infer_dimension(node, dims or self.g.manifests[nid].param_dims, self.inst.table)
        except DimensionMismatch as exc:
            self.add("UNIT_CONSISTENCY", nid, path, str(exc))
        except (UnknownParameter, UnknownUnit) as exc:
            self.add("TYPE_SAFETY", nid, path, str(exc))
        return None

    def _ref_dim(self, pid):
        m = self.g.manifests.get(pid)
        if m is None or m.kind is not ModelKind.PRODUCT:
            return None
        return m.body.reference_unit.dimension

    def _expect(self, nid, path, dim, want, what):
        if dim is not None and want is not None and dim != want:
            self.add(
                "UNIT_CONSISTENCY",
                nid,
                path,
                f"{what} has dimension {dim}, expected {want}",
                found=str(dim),
                expected=str(want),
            )

    def expressions(self, nid):
        m = self.g.manifests[nid]
        k = m.kind
        if k is ModelKind.PROCESS:
            for x in m.body.technosphere:
                path = f"/body/technosphere/{x.index}/amount"
                self._expect(nid, path, self._infer(nid, x.amount, path), self._ref_dim(x.target), f"exchange of {x.target}")
            for x in m.body.biosphere:
                self._infer(nid, x.amount, f"/body/biosphere/{x.index}/amount")
            if m.body.mass_loss is not None:
                path = "/body/mass_loss"
                self._expect(nid, path, self._infer(nid, m.body.mass_loss, path), MASS, "declared mass loss")
        elif k is ModelKind.PRODUCT:
            for q, node in sorted(m.body.components.items()):
                path = f"/body/components/{q}"
                self._expect(nid, path, self._infer(nid, node, path), self._ref_dim(q), f"component {q}")
        elif k is ModelKind.MIDPOINT_IMPACT:
            owners = sorted({e.source for e in self.g.in_edges(nid) if e.role == "shortcut"})
            for cat, node in sorted(m.body.items()):
                path = f"/body/{cat}"
                dim = self._infer(nid, node, path)
                for owner in owners:
                    ref = self._ref_dim(owner)
                    if ref is None:
                        ref = self._process_ref_dim(owner)
                    if ref is not None:
                        self._expect(nid, path, dim, impact_dimension(cat) / ref, f"impact {cat} per {owner}")
        elif k is ModelKind.ALLOCATION:
            for cp, node in sorted(m.body.items()):
                path = f"/body/{cp}"
                self._expect(nid, path, self._infer(nid, node, path), DIMENSIONLESS, "allocation coefficient")
        elif k is ModelKind.HANDPRINT_FOOTPRINT:
            for key in ("service", "resource"):
                self._infer(nid, m.body[key], f"/body/{key}")

    def _process_ref_dim(self, pid):
        m = self.g.manifests.get(pid)
        if m is None or m.kind is not ModelKind.PROCESS:
            return None
        outs = {x.target for x in m.body.outputs}
        dims = {self._ref_dim(t) for t in outs} - {None}
        return dims.pop() if len(dims) == 1 else None

    def taxonomy(self, nid):
        m = self.g.manifests[nid]
        kinds = {i: self.g.nodes[i].kind.value for i in self.g.ids}
        for v in check_taxonomy_grammar(m, kinds):
            self.add("TAXONOMY_GRAMMAR", nid, v.path, v.message, **v.values)
        if m.kind is ModelKind.PROCESS:
            outs = sorted({x.target for x in m.body.outputs})
            if len(outs) > 1 and not m.deps_with_role("allocation"):
                self.add("TAXONOMY_GRAMMAR", nid, "/body/technosphere", f"process with co-products {outs} has no allocation model")

    def ranges(self):
        for nid in self.g.ids:
            m = self.g.manifests[nid]
            mags, _ = self.inst.env(nid)
            for i, p in enumerate(m.params):
                if p.range is None or p.name not in mags:
                    continue
                v = float(np.asarray(mags[p.name]).reshape(-1)[0])
                lo, hi = p.range
                if v < lo.base_value - _EPS * abs(lo.base_value) or v > hi.base_value + _EPS * abs(hi.base_value):
                    unit = lo.unit
                    self.add(
                        "RANGE_CHECK",
                        nid,
                        f"/params/{i}",
                        f"{p.name} = {v / unit.scale:g} {unit.symbol} lies outside [{lo.value:g}, {hi.to(unit).value:g}] {unit.symbol}",
                        parameter=p.name,
                        value=v / unit.scale,
                        unit=unit.symbol,
                    )

    # --- graph-level rules

    def scopes(self):
        codes = {c: self.rules.rule(c).severity for c in RULE_CODES if self.on(c)}
        for e in self.g.edges:
            if e.analogic:
                continue
            consumer, provider = self.g.manifests[e.source], self.g.manifests[e.target]
            dep = consumer.dependencies[e.dep_index]
            bound = {n: b.value for n, b in self.inst.bound[e.target].items() if b.source == e.source}
            for v in check_scope_compat(
                consumer.scope,
                provider.scope,
                bound,
                dep.required_tags,
                consumer_id=e.source,
                version=str(consumer.version),
                path=f"/dependencies/{e.dep_index}",
                provider_id=e.target,
                severity=codes,
            ):
                if self.on(v.rule_code):
                    self.out.append(v)

    def allocation(self):
        if not self.on("ALLOCATION_SUM"):
            return
        for e in self.g.edges:
            if e.role != "allocation" or e.analogic:
                continue
            proc, am = self.g.manifests[e.source], self.g.manifests[e.target]
            if am.kind is not ModelKind.ALLOCATION or proc.kind is not ModelKind.PROCESS:
                continue
            outs = {x.target for x in proc.body.outputs}
            if set(am.body) != outs:
                self.add(
                    "ALLOCATION_SUM",
                    e.target,
                    "/body",
                    f"coefficients cover {sorted(am.body)}, {e.source} co-products are {sorted(outs)}",
                )
                continue
            coefs = {}
            try:
                for cp, node in sorted(am.body.items()):
                    coefs[cp] = float(np.asarray(self.inst.evaluate(e.target, node)[0]).reshape(-1)[0])
            except LcaError:
                continue
            neg = sorted(cp for cp, c in coefs.items() if c < 0)
            total = sum(coefs[k] for k in sorted(coefs))
            if neg:
                self.add("ALLOCATION_SUM", e.target, "/body", f"negative coefficients for {neg}", total=total)
            elif abs(total - 1.0) > ALLOCATION_TOLERANCE:
                self.add("ALLOCATION_SUM", e.target, "/body", f"coefficients sum to {total!r}, expected 1", total=total)

    def mass_balance(self):
        if not self.on("MASS_BALANCE"):
            return
        tol = float(self.rules.rule("MASS_BALANCE").params.get("tolerance", 0.01))
        for nid in self.g.ids:
            m = self.g.manifests[nid]
            if m.kind is not ModelKind.PROCESS:
                continue
            try:
                proc = instantiate_process(self.inst, nid)
            except LcaError:
                continue
            self.out.extend(check_mass_balance(proc, tol, model_id=nid, version=str(m.version), severity=self.sev("MASS_BALANCE")))

    def shortcuts(self):
        if not self.on("SHORTCUT_CONSISTENCY") or self.cf is None:
            return
        rule = self.rules.rule("SHORTCUT_CONSISTENCY")
        for nid in self.g.ids:
            m = self.g.manifests[nid]
            if m.kind is not ModelKind.PRODUCT:
                continue
            scs = [d.model_id for d in m.deps_with_role("shortcut") if d.model_id in self.g]
            has_tree = any(d.model_id in self.g for d in m.deps_with_role("production")) or m.body.components
            if not scs or not has_tree:
                continue
            sc = self.g.manifests[scs[0]]
            tol = float(sc.metadata.get("tolerance", rule.params.get("tolerance", 0.01)))
            demand = DemandSpec(nid, Quantity(1.0, m.body.reference_unit))
            try:
                res = evaluate(self.g, demand, Strategy.COMPARE, self.cf, table=self.inst.table)
            except LcaError:
                continue
            for cat in sorted(sc.body):
                s = res.shortcut_impacts[cat].value
                x = res.impacts[cat].value if cat in res.impacts else 0.0
                dev = relative_deviation(s, x)
                if dev > tol:
                    self.add(
                        "SHORTCUT_CONSISTENCY",
                        sc.id,
                        f"/body/{cat}",
                        f"{cat} for 1 {m.body.reference_unit.symbol} {nid}: shortcut {s:.6g}, expanded {x:.6g}, "
                        f"relative deviation {dev:.4g} exceeds {tol:g}",
                        shortcut=s,
                        expanded=x,
                        tolerance=tol,
                    )

    def cycles(self):
        if not self.on("CYCLE_STRUCTURAL"):
            return
        plain = detect_cycles(self.g, include_analogic=False)
        for cyc in plain:
            if any(self.g.nodes[n].kind is ModelKind.PROCESS for n in cyc):
                continue  # technosphere loops are solved as linear systems
            self.add("CYCLE_STRUCTURAL", cyc[0], "/dependencies", f"dependency cycle without a process: {' -> '.join(cyc + [cyc[0]])}", cycle=cyc)
        known = {tuple(c) for c in plain}
        full = detect_cycles(self.g, include_analogic=True)
        for cyc in full:
            if tuple(cyc) in known:
                continue
            self.add(
                "CYCLE_STRUCTURAL",
                cyc[0],
                "/dependencies",
                f"validation by analogy loops back on itself: {' -> '.join(cyc + [cyc[0]])}",
                cycle=cyc,
            )
        for label, found in (("dependency", plain), ("analogy-inclusive", full)):
            if found.truncated:
                self.add("CYCLE_STRUCTURAL", self.g.ids[0], "/dependencies", f"{label} cycle enumeration truncated at {len(found)}")

    def advisory(self):
        if not self.on("ADVISORY_TAINT"):
            return
        for nid, a in matching_advisories(self.g, self.advisories):
            if a.severity == "Info":
                continue
            downstream = sorted(descendants(self.g, nid, include_analogic=False))
            sev = self.sev("ADVISORY_TAINT") if a.severity == "Invalidated" else "Warning"
            self.add(
                "ADVISORY_TAINT",
                nid,
                "",
                f"{a.advisory_id} ({a.severity}): {a.reason}; {len(downstream)} dependent model(s) inherit it",
                severity=sev,
                advisory=a.advisory_id,
                dependents=", ".join(downstream),
            )


def _cf_for(rules: RuleSet, cf):
    if cf is not None:
        return cf
    rule = rules.rule("SHORTCUT_CONSISTENCY")
    if rule is None or "cf_table" not in rule.params:
        return None
    path = Path(rule.params["cf_table"])
    if not path.is_absolute() and rules.base_dir is not None:
        path = rules.base_dir / path
    return CharacterizationTable.load(path)


def graph_from_staging(staging: StagingStore, lock: Lockfile) -> DepGraph:
    manifests = []
    for mid, ver, h in lock.pins:
        entry = staging.get(mid, ver)
        if entry.hash != h:
            raise HashMismatch(f"{mid}@{ver}: lockfile pins {h[:12]}, staged copy is {entry.hash[:12]}")
        manifests.append(entry.manifest)
    return DepGraph(manifests)


def check_graph(g: DepGraph, rules: RuleSet, *, advisories=(), cf=None, table=None) -> list:
    """Sorted violations of every enabled rule over graph ``g``."""
    inst = Instantiation(g, table or default_table())
    return _Checker(g, rules, inst, list(advisories), _cf_for(rules, cf)).run()


def pass2_check(
    staging: StagingStore,
    lock: Lockfile,
    rules: RuleSet,
    *,
    advisories=(),
    cf: CharacterizationTable | None = None,
    table=None,
    timestamp=None,
) -> ValidationRecord:
    g = graph_from_staging(staging, lock)
    violations = check_graph(g, rules, advisories=advisories, cf=cf, table=table)
    return ValidationRecord.create(lock.hash, (rules.ruleset_id, rules.version), violations, timestamp)
