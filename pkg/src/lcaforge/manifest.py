"""Model manifests: schema validation, canonical bytes and content hashes.

A manifest is a UTF-8 JSON document (``*.lcam.json``) with the top-level keys
``id, version, kind, scope, params, dependencies, body, evidence, metadata``.
Parsing builds a normalized document alongside the typed view; the canonical
bytes of that document are what gets hashed, so key order, number spelling,
whitespace inside expressions and absent-vs-empty optional sections never
change a hash.
"""

from __future__ import annotations

import datetime as _dt
import json
import re
from dataclasses import dataclass, field
from enum import Enum

from . import expr as ex
from .canonical import canonical_bytes, sha256_hex
from .errors import ExprSyntaxError, SchemaError, UnknownUnit
from .units import Dimension, Quantity, UnitTable, default_table, parse_unit
from .versions import Version, VersionReq
from .violation import Violation

TOP_LEVEL_KEYS = ("id", "version", "kind", "scope", "params", "dependencies", "body", "evidence", "metadata")
REQUIRED_KEYS = ("id", "version", "kind", "scope", "body")
PEDIGREE_INDICATORS = (
    "reliability",
    "completeness",
    "temporal_correlation",
    "geographical_correlation",
    "technological_correlation",
)
_ID = re.compile(r"^[a-z0-9-]{1,64}$")


class ModelKind(str, Enum):
    PRODUCT = "Product"
    PROCESS = "Process"
    MIDPOINT_IMPACT = "MidpointImpactModel"
    PRODUCT_FLOW = "ProductFlowModel"
    HANDPRINT_FOOTPRINT = "HandprintFootprintModel"
    PARAMETER_CONVERSION = "ParameterConversionModel"
    ALLOCATION = "AllocationModel"
    UNCERTAINTY = "UncertaintyModel"


class EvidenceLevel(str, Enum):
    MEASURED = "Measured"
    CALIBRATED = "Calibrated"
    CONJECTURAL = "Conjectural"

    @property
    def rank(self) -> int:
        return {"Measured": 2, "Calibrated": 1, "Conjectural": 0}[self.value]


K = ModelKind

# (parent kind, child kind) -> allowed roles
ALLOWED_EDGES = {
    (K.PRODUCT, K.PROCESS): {"production"},
    (K.PRODUCT, K.PRODUCT): {"component"},
    (K.PRODUCT, K.MIDPOINT_IMPACT): {"shortcut"},
    (K.PRODUCT, K.PRODUCT_FLOW): {"property"},
    (K.PRODUCT, K.PARAMETER_CONVERSION): {"conversion"},
    (K.PRODUCT, K.UNCERTAINTY): {"uncertainty"},
    (K.PRODUCT, K.HANDPRINT_FOOTPRINT): {"handprint"},
    (K.PROCESS, K.PRODUCT): {"input"},
    (K.PROCESS, K.ALLOCATION): {"allocation"},
    (K.PROCESS, K.PARAMETER_CONVERSION): {"conversion"},
    (K.PROCESS, K.UNCERTAINTY): {"uncertainty"},
    (K.PROCESS, K.MIDPOINT_IMPACT): {"shortcut"},
    (K.PARAMETER_CONVERSION, K.PARAMETER_CONVERSION): {"conversion"},
}
ROLES = sorted({r for roles in ALLOWED_EDGES.values() for r in roles} | {"analogy"})
# roles whose outputs flow back into the parent's parameters
PARAM_PROVIDER_ROLES = ("conversion", "property")


@dataclass(frozen=True)
class Scope:
    temporal: tuple
    geographic: frozenset
    technological: frozenset = frozenset()
    operating_ranges: dict = field(default_factory=dict)
    functional_unit: Quantity | None = None


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    dimension: Dimension
    default: Quantity | None = None
    range: tuple | None = None
    mandatory: bool = False
    pedigree: tuple | None = None
    basic_uncertainty_factor: float | None = None


@dataclass(frozen=True)
class DependencyDecl:
    model_id: str
    version_req: VersionReq
    role: str
    bindings: dict = field(default_factory=dict)
    analogic: bool = False
    cut_off: str | None = None
    required_tags: frozenset = frozenset()


@dataclass(frozen=True)
class EvidenceRecord:
    level: EvidenceLevel
    source_id: str
    date: str
    note: str = ""


@dataclass(frozen=True)
class Exchange:
    target: str  # product id (technosphere) or flow id (biosphere)
    direction: str
    amount: object
    index: int
    pedigree: tuple | None = None
    basic_uncertainty_factor: float | None = None


@dataclass(frozen=True)
class ProcessBody:
    technosphere: tuple
    biosphere: tuple
    mass_loss: object = None

    @property
    def outputs(self):
        return [x for x in self.technosphere if x.direction == "out"]

    @property
    def inputs(self):
        return [x for x in self.technosphere if x.direction == "in"]


@dataclass(frozen=True)
class ProductBody:
    reference_unit: object
    properties: dict
    components: dict


@dataclass
class ModelManifest:
    id: str
    version: Version
    kind: ModelKind
    scope: Scope
    params: list
    dependencies: list
    body: object
    evidence: list
    metadata: dict
    doc: dict = field(repr=False)

    @property
    def key(self):
        return (self.id, str(self.version))

    def param(self, name) -> ParameterSpec | None:
        for p in self.params:
            if p.name == name:
                return p
        return None

    @property
    def param_dims(self) -> dict:
        return {p.name: p.dimension for p in self.params}

    def deps_with_role(self, role):
        return [d for d in self.dependencies if d.role == role and not d.analogic]

    def best_evidence(self) -> EvidenceLevel:
        if not self.evidence:
            return EvidenceLevel.CONJECTURAL
        return max((e.level for e in self.evidence), key=lambda lv: lv.rank)

    def canonical(self) -> bytes:
        return canonicalize(self)

    @property
    def hash(self) -> str:
        return content_hash(self)


# --------------------------------------------------------------------- parsing


class _Ctx:
    def __init__(self, table):
        self.table = table

    def fail(self, path, msg):
        raise SchemaError(path, msg)

    def obj(self, v, path):
        if not isinstance(v, dict):
            self.fail(path, "expected an object")
        return v

    def arr(self, v, path):
        if not isinstance(v, list):
            self.fail(path, "expected an array")
        return v

    def string(self, v, path, allow_empty=True):
        if not isinstance(v, str) or (not allow_empty and not v):
            self.fail(path, "expected a non-empty string" if not allow_empty else "expected a string")
        return v

    def number(self, v, path):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(path, "expected a number")
        return float(v)

    def unit(self, sym, path):
        try:
            return parse_unit(self.string(sym, path, False), self.table)
        except UnknownUnit as exc:
            self.fail(path, str(exc))

    def quantity(self, v, path):
        v = self.obj(v, path)
        if set(v) != {"value", "unit"}:
            self.fail(path, "quantity needs exactly 'value' and 'unit'")
        value = self.number(v["value"], path + "/value")
        try:
            return Quantity(value, self.unit(v["unit"], path + "/unit"))
        except ValueError as exc:
            self.fail(path, str(exc))

    def dimension(self, v, path):
        if isinstance(v, str):
            return self.unit(v, path).dimension
        v = self.obj(v, path)
        for k, e in v.items():
            if isinstance(e, bool) or not isinstance(e, int):
                self.fail(f"{path}/{k}", "exponent must be an integer")
        return Dimension(v)

    def expression(self, v, path, housed):
        text = self.string(v, path) if not isinstance(v, (int, float)) or isinstance(v, bool) else repr(float(v))
        try:
            node = ex.parse_expression(text)
        except ExprSyntaxError as exc:
            raise ExprSyntaxError(f"{path}: {exc.args[0]}", exc.offset) from None
        for sym in ex.unit_symbols(node):
            self.unit(sym, path)
        missing = ex.references(node) - set(housed)
        if missing:
            self.fail(path, f"unhoused parameter reference(s) {sorted(missing)}")
        return node

    def pedigree(self, v, path):
        if v is None:
            return None
        v = self.arr(v, path)
        if len(v) != 5 or any(isinstance(s, bool) or not isinstance(s, int) or not 1 <= s <= 5 for s in v):
            self.fail(path, "pedigree must be five integer scores in 1..5")
        return tuple(v)

    def factor(self, v, path):
        if v is None:
            return None
        f = self.number(v, path)
        if f < 1:
            self.fail(path, "basic uncertainty factor must be >= 1")
        return f


def _qdoc(q):
    return None if q is None else {"value": q.value, "unit": q.unit.symbol}


def parse_manifest(document, table: UnitTable | None = None) -> ModelManifest:
    """Parse and fully validate a manifest from bytes, text or an already-decoded dict."""
    table = table or default_table()
    c = _Ctx(table)
    if isinstance(document, (bytes, bytearray)):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SchemaError("/", f"not UTF-8: {exc}") from None
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError("/", f"invalid JSON: {exc}") from None
    raw = c.obj(document, "/")
    extra = sorted(set(raw) - set(TOP_LEVEL_KEYS))
    if extra:
        c.fail(f"/{extra[0]}", "unknown top-level key")
    for key in REQUIRED_KEYS:
        if key not in raw:
            c.fail(f"/{key}", "missing required field")

    mid = c.string(raw["id"], "/id")
    if not _ID.match(mid):
        c.fail("/id", "id must match [a-z0-9-]{1,64}")
    try:
        version = Version.parse(c.string(raw["version"], "/version"))
    except ValueError as exc:
        c.fail("/version", str(exc))
    try:
        kind = ModelKind(raw["kind"])
    except ValueError:
        c.fail("/kind", f"unknown kind {raw['kind']!r}")

    metadata = c.obj(raw.get("metadata") or {}, "/metadata")
    if metadata.get("schema_version", 1) != 1:
        c.fail("/metadata/schema_version", "only schema_version 1 is supported")

    params, pdocs = _parse_params(c, raw.get("params") or [])
    names = [p.name for p in params]
    scope, sdoc = _parse_scope(c, raw["scope"], {p.name: p for p in params})
    deps, ddocs = _parse_deps(c, raw.get("dependencies") or [], names)
    body, bdoc = _parse_body(c, kind, raw["body"], names)
    evidence, edocs = _parse_evidence(c, raw.get("evidence") or [])

    doc = {
        "id": mid,
        "version": str(version),
        "kind": kind.value,
        "scope": sdoc,
        "params": pdocs,
        "dependencies": ddocs,
        "body": bdoc,
        "evidence": edocs,
        "metadata": metadata,
    }
    try:
        canonical_bytes(metadata)
    except (TypeError, ValueError) as exc:
        c.fail("/metadata", str(exc))
    return ModelManifest(mid, version, kind, scope, params, deps, body, evidence, metadata, doc)


def _parse_params(c, raw):
    params, docs = [], []
    seen = set()
    for i, p in enumerate(c.arr(raw, "/params")):
        path = f"/params/{i}"
        p = c.obj(p, path)
        unknown = set(p) - {"name", "dimension", "default", "range", "mandatory", "pedigree", "basic_uncertainty_factor"}
        if unknown:
            c.fail(f"{path}/{sorted(unknown)[0]}", "unknown parameter field")
        if "name" not in p:
            c.fail(f"{path}/name", "missing required field")
        name = c.string(p["name"], f"{path}/name", False)
        if not re.match(r"^[A-Za-z_][A-Za-z0-9_]*$", name) or name in ex.FUNCS:
            c.fail(f"{path}/name", f"invalid parameter name {name!r}")
        if name in seen:
            c.fail(f"{path}/name", f"duplicate parameter {name!r}")
        seen.add(name)
        if "dimension" not in p:
            c.fail(f"{path}/dimension", "missing required field")
        dim = c.dimension(p["dimension"], f"{path}/dimension")
        default = None
        if p.get("default") is not None:
            default = c.quantity(p["default"], f"{path}/default")
            if default.dimension != dim:
                c.fail(f"{path}/default", f"default has dimension {default.dimension}, parameter is {dim}")
        rng = None
        if p.get("range") is not None:
            r = c.arr(p["range"], f"{path}/range")
            if len(r) != 2:
                c.fail(f"{path}/range", "range is [min, max]")
            lo, hi = c.quantity(r[0], f"{path}/range/0"), c.quantity(r[1], f"{path}/range/1")
            for q, j in ((lo, 0), (hi, 1)):
                if q.dimension != dim:
                    c.fail(f"{path}/range/{j}", "range bound dimension differs from parameter")
            if lo.base_value > hi.base_value:
                c.fail(f"{path}/range", "range min exceeds max")
            rng = (lo, hi)
        mandatory = p.get("mandatory", False)
        if not isinstance(mandatory, bool):
            c.fail(f"{path}/mandatory", "expected a boolean")
        ped = c.pedigree(p.get("pedigree"), f"{path}/pedigree")
        buf = c.factor(p.get("basic_uncertainty_factor"), f"{path}/basic_uncertainty_factor")
        params.append(ParameterSpec(name, dim, default, rng, mandatory, ped, buf))
        docs.append(
            {
                "name": name,
                "dimension": dim.to_json(),
                "default": _qdoc(default),
                "range": None if rng is None else [_qdoc(rng[0]), _qdoc(rng[1])],
                "mandatory": mandatory,
                "pedigree": None if ped is None else list(ped),
                "basic_uncertainty_factor": buf,
            }
        )
    return params, docs


def _parse_scope(c, raw, params):
    raw = c.obj(raw, "/scope")
    unknown = set(raw) - {"functional_unit", "temporal", "geographic", "technological", "operating_ranges"}
    if unknown:
        c.fail(f"/scope/{sorted(unknown)[0]}", "unknown scope field")
    for key in ("temporal", "geographic"):
        if key not in raw:
            c.fail(f"/scope/{key}", "missing required field")
    t = c.arr(raw["temporal"], "/scope/temporal")
    if len(t) != 2 or any(isinstance(y, bool) or not isinstance(y, int) for y in t):
        c.fail("/scope/temporal", "temporal is [start_year, end_year]")
    if t[0] > t[1]:
        c.fail("/scope/temporal", "start year after end year")
    geo = c.arr(raw["geographic"], "/scope/geographic")
    if not geo:
        c.fail("/scope/geographic", "geographic set must be non-empty")
    geo = frozenset(c.string(g, f"/scope/geographic/{i}", False) for i, g in enumerate(geo))
    tech = frozenset(
        c.string(g, f"/scope/technological/{i}", False)
        for i, g in enumerate(c.arr(raw.get("technological") or [], "/scope/technological"))
    )
    fu = None
    if raw.get("functional_unit") is not None:
        fu = c.quantity(raw["functional_unit"], "/scope/functional_unit")
    ranges, rdoc = {}, {}
    for name, pair in c.obj(raw.get("operating_ranges") or {}, "/scope/operating_ranges").items():
        path = f"/scope/operating_ranges/{name}"
        if name not in params:
            c.fail(path, f"operating range for undeclared parameter {name!r}")
        pair = c.arr(pair, path)
        if len(pair) != 2:
            c.fail(path, "operating range is [min, max]")
        lo, hi = c.quantity(pair[0], path + "/0"), c.quantity(pair[1], path + "/1")
        if lo.dimension != params[name].dimension or hi.dimension != params[name].dimension:
            c.fail(path, "operating range dimension differs from parameter")
        if lo.base_value > hi.base_value:
            c.fail(path, "operating range min exceeds max")
        ranges[name] = (lo, hi)
        rdoc[name] = [_qdoc(lo), _qdoc(hi)]
    scope = Scope((t[0], t[1]), geo, tech, ranges, fu)
    doc = {
        "functional_unit": _qdoc(fu),
        "temporal": [t[0], t[1]],
        "geographic": sorted(geo),
        "technological": sorted(tech),
        "operating_ranges": rdoc,
    }
    return scope, doc


def _parse_deps(c, raw, names):
    deps, docs = [], []
    for i, d in enumerate(c.arr(raw, "/dependencies")):
        path = f"/dependencies/{i}"
        d = c.obj(d, path)
        unknown = set(d) - {"model_id", "version_req", "role", "bindings", "analogic", "cut_off", "required_tags"}
        if unknown:
            c.fail(f"{path}/{sorted(unknown)[0]}", "unknown dependency field")
        for key in ("model_id", "version_req", "role"):
            if key not in d:
                c.fail(f"{path}/{key}", "missing required field")
        mid = c.string(d["model_id"], f"{path}/model_id")
        if not _ID.match(mid):
            c.fail(f"{path}/model_id", "invalid model id")
        try:
            req = VersionReq.parse(c.string(d["version_req"], f"{path}/version_req"))
        except ValueError as exc:
            c.fail(f"{path}/version_req", str(exc))
        analogic = d.get("analogic", False)
        if not isinstance(analogic, bool):
            c.fail(f"{path}/analogic", "expected a boolean")
        role = c.string(d["role"], f"{path}/role")
        if role not in ROLES:
            c.fail(f"{path}/role", f"unknown role {role!r}")
        bindings = {}
        for k, v in c.obj(d.get("bindings") or {}, f"{path}/bindings").items():
            bindings[k] = c.expression(v, f"{path}/bindings/{k}", names)
        cut = d.get("cut_off")
        if cut is not None:
            cut = c.string(cut, f"{path}/cut_off", False)
        tags = frozenset(
            c.string(t, f"{path}/required_tags/{j}", False)
            for j, t in enumerate(c.arr(d.get("required_tags") or [], f"{path}/required_tags"))
        )
        deps.append(DependencyDecl(mid, req, role, bindings, analogic, cut, tags))
        docs.append(
            {
                "model_id": mid,
                "version_req": str(req),
                "role": role,
                "bindings": {k: ex.unparse(v) for k, v in bindings.items()},
                "analogic": analogic,
                "cut_off": cut,
                "required_tags": sorted(tags),
            }
        )
    return deps, docs


_DIST_FIELDS = {
    "point": ("value",),
    "lognormal": ("sigma_ln",),
    "normal": ("mean", "sd"),
    "uniform": ("lo", "hi"),
    "triangular": ("lo", "mode", "hi"),
    "pedigree": ("scores",),
}
_DIST_OPTIONAL = {"lognormal": ("median",), "pedigree": ("basic_factor",)}


def _parse_dist(c, raw, path):
    raw = c.obj(raw, path)
    kind = raw.get("type")
    if kind not in _DIST_FIELDS:
        c.fail(f"{path}/type", f"unknown distribution type {kind!r}")
    allowed = {"type", *_DIST_FIELDS[kind], *_DIST_OPTIONAL.get(kind, ())}
    unknown = set(raw) - allowed
    if unknown:
        c.fail(f"{path}/{sorted(unknown)[0]}", "unknown distribution field")
    out = {"type": kind}
    for key in _DIST_FIELDS[kind]:
        if key not in raw:
            c.fail(f"{path}/{key}", "missing required field")
    if kind == "pedigree":
        out["scores"] = list(c.pedigree(raw["scores"], f"{path}/scores"))
        out["basic_factor"] = c.factor(raw.get("basic_factor", 1.0), f"{path}/basic_factor")
        return out
    if kind == "lognormal":
        s = c.number(raw["sigma_ln"], f"{path}/sigma_ln")
        if s < 0:
            c.fail(f"{path}/sigma_ln", "sigma_ln must be >= 0")
        out["sigma_ln"] = s
        if raw.get("median") is not None:
            med = c.quantity(raw["median"], f"{path}/median")
            if med.value <= 0:
                c.fail(f"{path}/median", "lognormal median must be > 0")
            out["median"] = _qdoc(med)
        return out
    qs = {k: c.quantity(raw[k], f"{path}/{k}") for k in _DIST_FIELDS[kind]}
    dims = {q.dimension for q in qs.values()}
    if len(dims) > 1:
        c.fail(path, "distribution parameters have mixed dimensions")
    if kind == "normal" and qs["sd"].value < 0:
        c.fail(f"{path}/sd", "sd must be >= 0")
    if kind in ("uniform", "triangular"):
        order = [qs[k].base_value for k in _DIST_FIELDS[kind]]
        if order != sorted(order):
            c.fail(path, "bounds must satisfy lo <= mode <= hi")
    out.update({k: _qdoc(q) for k, q in qs.items()})
    return out


def _exchange(c, raw, path, names, key, index):
    raw = c.obj(raw, path)
    unknown = set(raw) - {key, "direction", "amount", "pedigree", "basic_uncertainty_factor"}
    if unknown:
        c.fail(f"{path}/{sorted(unknown)[0]}", "unknown exchange field")
    for k in (key, "direction", "amount"):
        if k not in raw:
            c.fail(f"{path}/{k}", "missing required field")
    target = c.string(raw[key], f"{path}/{key}", False)
    direction = raw["direction"]
    if direction not in ("in", "out"):
        c.fail(f"{path}/direction", "direction is 'in' or 'out'")
    amount = c.expression(raw["amount"], f"{path}/amount", names)
    ped = c.pedigree(raw.get("pedigree"), f"{path}/pedigree")
    buf = c.factor(raw.get("basic_uncertainty_factor"), f"{path}/basic_uncertainty_factor")
    x = Exchange(target, direction, amount, index, ped, buf)
    doc = {
        key: target,
        "direction": direction,
        "amount": ex.unparse(amount),
        "pedigree": None if ped is None else list(ped),
        "basic_uncertainty_factor": buf,
    }
    return x, doc


def _expr_map(c, raw, path, housed):
    out, doc = {}, {}
    for k, v in c.obj(raw, path).items():
        out[k] = c.expression(v, f"{path}/{k}", housed)
        doc[k] = ex.unparse(out[k])
    return out, doc


def _parse_body(c, kind, raw, names):
    raw = c.obj(raw, "/body")
    if kind is K.PROCESS:
        unknown = set(raw) - {"technosphere", "biosphere", "mass_loss"}
        if unknown:
            c.fail(f"/body/{sorted(unknown)[0]}", "unknown process body field")
        tech, tdoc = [], []
        for i, x in enumerate(c.arr(raw.get("technosphere") or [], "/body/technosphere")):
            e, d = _exchange(c, x, f"/body/technosphere/{i}", names, "product_id", i)
            tech.append(e)
            tdoc.append(d)
        bio, bdoc = [], []
        for i, x in enumerate(c.arr(raw.get("biosphere") or [], "/body/biosphere")):
            e, d = _exchange(c, x, f"/body/biosphere/{i}", names, "flow_id", i)
            bio.append(e)
            bdoc.append(d)
        if not any(x.direction == "out" for x in tech):
            c.fail("/body/technosphere", "a process needs at least one output exchange")
        loss = None
        if raw.get("mass_loss") is not None:
            loss = c.expression(raw["mass_loss"], "/body/mass_loss", names)
        body = ProcessBody(tuple(tech), tuple(bio), loss)
        return body, {
            "technosphere": tdoc,
            "biosphere": bdoc,
            "mass_loss": None if loss is None else ex.unparse(loss),
        }
    if kind is K.PRODUCT:
        unknown = set(raw) - {"reference_unit", "properties", "components"}
        if unknown:
            c.fail(f"/body/{sorted(unknown)[0]}", "unknown product body field")
        if "reference_unit" not in raw:
            c.fail("/body/reference_unit", "missing required field")
        ref = c.unit(raw["reference_unit"], "/body/reference_unit")
        props = {
            k: c.quantity(v, f"/body/properties/{k}")
            for k, v in c.obj(raw.get("properties") or {}, "/body/properties").items()
        }
        comps, cdoc = _expr_map(c, raw.get("components") or {}, "/body/components", names)
        body = ProductBody(ref, props, comps)
        return body, {
            "reference_unit": ref.symbol,
            "properties": {k: _qdoc(q) for k, q in props.items()},
            "components": cdoc,
        }
    if kind in (K.PARAMETER_CONVERSION, K.PRODUCT_FLOW):
        outputs = list(c.obj(raw, "/body"))
        return _expr_map(c, raw, "/body", list(names) + outputs)
    if kind is K.HANDPRINT_FOOTPRINT:
        if set(raw) != {"service", "resource"}:
            c.fail("/body", "handprint-footprint body needs exactly 'service' and 'resource'")
        return _expr_map(c, raw, "/body", names)
    if kind is K.UNCERTAINTY:
        dists = {k: _parse_dist(c, v, f"/body/{k}") for k, v in c.obj(raw, "/body").items()}
        return dists, dists
    # MidpointImpactModel (category -> expr) and AllocationModel (co-product -> coefficient)
    if not raw:
        c.fail("/body", f"{kind.value} body must not be empty")
    return _expr_map(c, raw, "/body", names)


def _parse_evidence(c, raw):
    out, docs = [], []
    for i, e in enumerate(c.arr(raw, "/evidence")):
        path = f"/evidence/{i}"
        e = c.obj(e, path)
        try:
            level = EvidenceLevel(e.get("level"))
        except ValueError:
            c.fail(f"{path}/level", "level is Measured, Calibrated or Conjectural")
        source = c.string(e.get("source_id", ""), f"{path}/source_id")
        if level is not EvidenceLevel.CONJECTURAL and not source:
            c.fail(f"{path}/source_id", f"{level.value} evidence needs a source_id")
        date = c.string(e.get("date", ""), f"{path}/date")
        try:
            _dt.date.fromisoformat(date)
        except ValueError:
            c.fail(f"{path}/date", "date must be an ISO date (YYYY-MM-DD)")
        note = c.string(e.get("note", ""), f"{path}/note")
        out.append(EvidenceRecord(level, source, date, note))
        docs.append({"level": level.value, "source_id": source, "date": date, "note": note})
    return out, docs


# ------------------------------------------------------------ canonical form


def canonicalize(m: ModelManifest) -> bytes:
    return canonical_bytes(m.doc)


def content_hash(m: ModelManifest) -> str:
    return sha256_hex(canonicalize(m))


def load_manifest(path, table: UnitTable | None = None) -> ModelManifest:
    with open(path, "rb") as fh:
        return parse_manifest(fh.read(), table)


# ---------------------------------------------------------- taxonomy grammar


def edge_allowed(parent: ModelKind, role: str, child: ModelKind) -> bool:
    return role in ALLOWED_EDGES.get((parent, child), ())


def check_taxonomy_grammar(m: ModelManifest, dep_kinds: dict) -> list:
    """Violations for every non-analogic dependency edge outside the allowed-edge table."""
    out = []
    for i, d in enumerate(m.dependencies):
        if d.analogic:
            continue
        path = f"/dependencies/{i}"
        child = dep_kinds.get(d.model_id)
        if child is None:
            continue
        child = ModelKind(child)
        if not edge_allowed(m.kind, d.role, child):
            out.append(
                Violation(
                    "TAXONOMY_GRAMMAR",
                    f"disallowed edge {m.kind.value} -({d.role})-> {child.value} ({d.model_id})",
                    m.id,
                    str(m.version),
                    path,
                    values={"parent_kind": m.kind.value, "role": d.role, "child_kind": child.value},
                )
            )
        elif d.role == "allocation" and len(m.body.outputs) < 2:
            out.append(
                Violation(
                    "TAXONOMY_GRAMMAR",
                    f"allocation-requires-multi-output: {m.id} has {len(m.body.outputs)} output(s)",
                    m.id,
                    str(m.version),
                    path,
                    values={"outputs": len(m.body.outputs)},
                )
            )
    return out
