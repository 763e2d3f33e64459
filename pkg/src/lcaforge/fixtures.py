"""Generated corpora for validation tests and demonstrations.

:func:`planted_fault_corpus` builds a root product with one independent
branch per integrity rule code. Each branch is correct except for a single
planted fault, so validating the corpus should report exactly one violation
per selected code.
"""

from __future__ import annotations

from pathlib import Path

from .canonical import write_canonical
from .registry import Advisory
from .versions import VersionReq
from .violation import RULE_CODES

PLANTED_ROOT = "fault-root"
_EVIDENCE = [{"level": "Measured", "source_id": "bench-log-7", "date": "2024-03-01"}]
_ADVISORY_TIME = "2024-06-01T00:00:00Z"


def _model(mid, kind, body, *, params=(), deps=(), temporal=(2020, 2030), geo=("GLO",), tech=(), ranges=None, metadata=None):
    scope = {"temporal": list(temporal), "geographic": list(geo), "technological": list(tech)}
    if ranges:
        scope["operating_ranges"] = ranges
    return {
        "id": mid,
        "version": "1.0.0",
        "kind": kind,
        "scope": scope,
        "params": list(params),
        "dependencies": list(deps),
        "body": body,
        "evidence": list(_EVIDENCE),
        "metadata": dict(metadata or {}),
    }


def _dep(mid, role, **extra):
    return {"model_id": mid, "version_req": "^1.0.0", "role": role, **extra}


def _product(mid, unit="item", **kw):
    return _model(mid, "Product", {"reference_unit": unit}, **kw)


def _process(mid, technosphere, biosphere=(), **kw):
    return _model(mid, "Process", {"technosphere": list(technosphere), "biosphere": list(biosphere)}, **kw)


def _out(product, amount):
    return {"product_id": product, "direction": "out", "amount": amount}


def _in(product, amount):
    return {"product_id": product, "direction": "in", "amount": amount}


def _q(value, unit):
    return {"value": value, "unit": unit}


def _branch(code):
    """(branch product id, models) planting one fault for ``code``."""
    if code == "UNIT_CONSISTENCY":
        # a volume bound into a mass parameter
        return "f-unit", [
            _product(
                "f-unit",
                "kg",
                params=[{"name": "volume", "dimension": "L", "default": _q(1, "L")}],
                deps=[_dep("f-unit-proc", "production", bindings={"water_mass": "volume"})],
            ),
            _process(
                "f-unit-proc",
                [_out("f-unit", "1 [kg]")],
                params=[{"name": "water_mass", "dimension": "kg", "default": _q(1, "kg")}],
            ),
        ]
    if code == "RANGE_CHECK":
        return "f-range", [
            _product(
                "f-range",
                params=[
                    {"name": "lifetime", "dimension": "yr", "default": _q(50, "yr"), "range": [_q(1, "yr"), _q(10, "yr")]}
                ],
            )
        ]
    if code == "TYPE_SAFETY":
        return "f-type", [
            _product("f-type", deps=[_dep("f-type-conv", "conversion")]),
            _model("f-type-conv", "ParameterConversionModel", {"a": "b * 2", "b": "a / 2"}),
        ]
    if code == "MANDATORY_PARAMS":
        return "f-mandatory", [
            _product("f-mandatory", params=[{"name": "mass_per_unit", "dimension": "kg", "mandatory": True}])
        ]
    if code == "TAXONOMY_GRAMMAR":
        return "f-taxonomy", [
            _product("f-taxonomy", deps=[_dep("f-taxonomy-split", "allocation")]),
            _model("f-taxonomy-split", "AllocationModel", {"f-taxonomy": "1"}),
        ]
    if code == "SCOPE_TEMPORAL":
        return "f-temporal", [
            _product("f-temporal", deps=[_dep("f-temporal-proc", "production")]),
            _process("f-temporal-proc", [_out("f-temporal", "1 [item]")], temporal=(2010, 2015)),
        ]
    if code == "SCOPE_GEOGRAPHIC":
        return "f-geo", [
            _product("f-geo", geo=("FR",), deps=[_dep("f-geo-proc", "production")]),
            _process("f-geo-proc", [_out("f-geo", "1 [item]")], geo=("DE",)),
        ]
    if code == "SCOPE_TECHNOLOGICAL":
        return "f-tech", [
            _product("f-tech", deps=[_dep("f-tech-proc", "production", required_tags=["lithium-ion"])]),
            _process("f-tech-proc", [_out("f-tech", "1 [item]")], tech=("lead-acid",)),
        ]
    if code == "SCOPE_OPERATING_RANGE":
        return "f-oprange", [
            _product(
                "f-oprange",
                params=[{"name": "power", "dimension": "W", "default": _q(250, "W")}],
                deps=[_dep("f-oprange-proc", "production", bindings={"power": "power"})],
            ),
            _process(
                "f-oprange-proc",
                [_out("f-oprange", "1 [item]")],
                params=[{"name": "power", "dimension": "W", "default": _q(50, "W")}],
                ranges={"power": [_q(10, "W"), _q(100, "W")]},
            ),
        ]
    if code == "ALLOCATION_SUM":
        return "f-alloc", [
            _product("f-alloc", deps=[_dep("f-alloc-proc", "production")]),
            _process(
                "f-alloc-proc",
                [_out("f-alloc", "1 [item]"), _out("f-alloc-co", "1 [item]")],
                deps=[_dep("f-alloc-split", "allocation")],
            ),
            _model("f-alloc-split", "AllocationModel", {"f-alloc": "0.6", "f-alloc-co": "0.6"}),
        ]
    if code == "MASS_BALANCE":
        return "f-mass", [
            _product("f-mass", "kg", deps=[_dep("f-mass-proc", "production")]),
            _process("f-mass-proc", [_out("f-mass", "1 [kg]"), _in("f-mass-feed", "2 [kg]")]),
        ]
    if code == "SHORTCUT_CONSISTENCY":
        return "f-shortcut", [
            _product("f-shortcut", "kg", deps=[_dep("f-shortcut-proc", "production"), _dep("f-shortcut-impact", "shortcut")]),
            _process(
                "f-shortcut-proc",
                [_out("f-shortcut", "1 [kg]")],
                [{"flow_id": "co2-fossil", "direction": "out", "amount": "1 [kg]"}],
            ),
            _model(
                "f-shortcut-impact",
                "MidpointImpactModel",
                {"climate_change": "2 [kgCO2e/kg]"},
                metadata={"tolerance": 0.01},
            ),
        ]
    if code == "CYCLE_STRUCTURAL":
        return "f-cycle", [
            _product("f-cycle", deps=[_dep("f-cycle-a", "conversion")]),
            _model("f-cycle-a", "ParameterConversionModel", {}, deps=[_dep("f-cycle-b", "conversion")]),
            _model("f-cycle-b", "ParameterConversionModel", {}, deps=[_dep("f-cycle-a", "conversion")]),
        ]
    if code == "ADVISORY_TAINT":
        return "f-advised", [_product("f-advised")]
    raise ValueError(f"unknown rule code {code!r}")


def planted_fault_corpus(codes=RULE_CODES):
    """Manifest documents and advisories planting one fault per code in ``codes``."""
    unknown = set(codes) - set(RULE_CODES)
    if unknown:
        raise ValueError(f"unknown rule codes {sorted(unknown)}")
    docs, deps = [], []
    for code in RULE_CODES:
        if code not in codes:
            continue
        head, models = _branch(code)
        deps.append(_dep(head, "component"))
        docs.extend(models)
    docs.insert(0, _product(PLANTED_ROOT, geo=("FR",), deps=deps))
    advisories = []
    if "ADVISORY_TAINT" in codes:
        advisories.append(
            Advisory(
                "LCA-2024-0001",
                "f-advised",
                VersionReq.parse(">=1.0.0,<2.0.0"),
                "Invalidated",
                "calibration data found to be mislabelled",
                _ADVISORY_TIME,
                None,
            )
        )
    return docs, advisories


def write_corpus(directory, docs) -> list:
    """Write each document as ``<id>.lcam.json``; returns the paths."""
    directory = Path(directory)
    paths = []
    for d in docs:
        p = directory / f"{d['id']}.lcam.json"
        write_canonical(p, d)
        paths.append(p)
    return paths
