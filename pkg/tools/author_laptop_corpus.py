"""Writes the synthetic laptop corpus shipped under src/lcaforge/data/corpus/laptop.

All numbers are invented for testing; none are real inventory data.
"""

import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "lcaforge" / "data" / "corpus" / "laptop"


def q(v, u):
    return {"value": v, "unit": u}


def scope(geo=("FR",), years=(2020, 2030), tech=(), ranges=None):
    s = {"temporal": list(years), "geographic": list(geo), "technological": list(tech)}
    if ranges:
        s["operating_ranges"] = ranges
    return s


def ev(level, source, note=""):
    return [{"level": level, "source_id": source, "date": "2024-01-15", "note": note}]


def dep(mid, role, req="^1.0.0", **kw):
    d = {"model_id": mid, "version_req": req, "role": role}
    d.update(kw)
    return d


def product(mid, unit, deps, params=(), evidence=None, fu=None, geo=("FR",), tech=()):
    sc = scope(geo, tech=tech)
    sc["functional_unit"] = q(1, unit) if fu is None else fu
    return {
        "id": mid, "version": "1.0.0", "kind": "Product", "scope": sc,
        "params": list(params), "dependencies": deps,
        "body": {"reference_unit": unit},
        "evidence": evidence or [], "metadata": {},
    }


def process(mid, tech, bio, deps, params=(), evidence=None, geo=("FR",), ranges=None, loss=None):
    body = {"technosphere": tech, "biosphere": bio}
    if loss:
        body["mass_loss"] = loss
    return {
        "id": mid, "version": "1.0.0", "kind": "Process", "scope": scope(geo, ranges=ranges),
        "params": list(params), "dependencies": deps, "body": body,
        "evidence": evidence or [], "metadata": {},
    }


def tx(pid, direction, amount, **kw):
    return {"product_id": pid, "direction": direction, "amount": amount, **kw}


def bx(fid, direction, amount, **kw):
    return {"flow_id": fid, "direction": direction, "amount": amount, **kw}


models = [
    product(
        "laptop", "item",
        [
            dep("laptop-assembly", "production", bindings={"pcb_mass": "pcb_mass"}),
            dep("laptop-params", "conversion", bindings={"board_area": "board_area"}),
            dep("laptop-impact", "shortcut", bindings={"board_area": "board_area"}),
        ],
        params=[
            {"name": "board_area", "dimension": "cm2", "default": q(400, "cm2"),
             "range": [q(100, "cm2"), q(1000, "cm2")], "mandatory": True},
            {"name": "pcb_mass", "dimension": "kg"},
        ],
        evidence=ev("Measured", "teardown-2024-017", "synthetic teardown record"),
        tech=("laptop",),
    ),
    process(
        "laptop-assembly",
        [
            tx("laptop", "out", "1 [item]"),
            tx("pcb", "in", "pcb_mass"),
            tx("aluminium", "in", "1.2 [kg]"),
            tx("electricity", "in", "5 [kWh]"),
        ],
        [],
        [dep("pcb", "input"), dep("aluminium", "input"), dep("electricity", "input")],
        params=[{"name": "pcb_mass", "dimension": "kg", "mandatory": True}],
        evidence=ev("Measured", "plant-audit-2023-04"),
        ranges={"pcb_mass": [q(0.05, "kg"), q(2, "kg")]},
    ),
    {
        "id": "laptop-params", "version": "1.0.0", "kind": "ParameterConversionModel",
        "scope": scope(("GLO",), ranges={"board_area": [q(100, "cm2"), q(1000, "cm2")]}),
        "params": [{"name": "board_area", "dimension": "cm2", "mandatory": True}],
        "dependencies": [],
        "body": {"pcb_mass": "board_area * 0.001 [kg/cm2]"},
        "evidence": ev("Calibrated", "pcb-density-fit-2022"), "metadata": {},
    },
    {
        "id": "laptop-impact", "version": "1.0.0", "kind": "MidpointImpactModel",
        "scope": scope(("GLO",), ranges={"board_area": [q(100, "cm2"), q(1000, "cm2")]}),
        "params": [{"name": "board_area", "dimension": "cm2", "mandatory": True}],
        "dependencies": [],
        "body": {
            "climate_change": "2.95 [kgCO2e/item] + 0.00276 [kgCO2e/item/cm2] * board_area",
            "acidification": "0.01087 [molHeq/item] + 0.0000155 [molHeq/item/cm2] * board_area",
        },
        "evidence": ev("Calibrated", "laptop-expand-run-2024", "fitted to the expanded sub-tree"),
        "metadata": {"tolerance": 0.01},
    },
    product("pcb", "kg", [dep("pcb-manufacturing", "production")],
            evidence=ev("Measured", "pcb-spec-sheet")),
    process(
        "pcb-manufacturing",
        [tx("pcb", "out", "1 [kg]"), tx("copper", "in", "1.05 [kg]"), tx("electricity", "in", "10 [kWh]")],
        [bx("copper-scrap", "out", "0.05 [kg]")],
        [dep("copper", "input"), dep("electricity", "input")],
        evidence=ev("Calibrated", "pcb-lci-2021"),
    ),
    product("copper", "kg", [dep("copper-production", "production")],
            evidence=ev("Measured", "copper-assay")),
    process(
        "copper-production",
        [tx("copper", "out", "1 [kg]"), tx("electricity", "in", "3 [kWh]")],
        [bx("co2-fossil", "out", "2 [kg]"), bx("so2", "out", "0.01 [kg]")],
        [dep("electricity", "input")],
        evidence=ev("Measured", "smelter-report-2023"),
    ),
    product("aluminium", "kg", [dep("aluminium-production", "production")],
            evidence=ev("Measured", "alloy-datasheet")),
    process(
        "aluminium-production",
        [tx("aluminium", "out", "1 [kg]"), tx("electricity", "in", "15 [kWh]")],
        [bx("co2-fossil", "out", "1.5 [kg]"), bx("so2", "out", "0.005 [kg]")],
        [dep("electricity", "input"),
         dep("copper-production", "analogy", analogic=True)],
        evidence=ev("Conjectural", "", "scaled by analogy with copper smelting"),
    ),
    product("electricity", "kWh", [dep("electricity-fr", "production")],
            evidence=ev("Measured", "grid-operator-2023")),
    process(
        "electricity-fr",
        [tx("electricity", "out", "1 [kWh]")],
        [bx("co2-fossil", "out", "co2_per_kwh * 1 [kWh]"), bx("so2", "out", "0.0001 [kg]")],
        [],
        params=[{"name": "co2_per_kwh", "dimension": "kg/kWh", "default": q(0.05, "kg/kWh"),
                 "pedigree": [2, 3, 1, 1, 1], "basic_uncertainty_factor": 1.05}],
        evidence=ev("Measured", "grid-operator-2023"),
    ),
]

assert len(models) == 12
OUT.mkdir(parents=True, exist_ok=True)
for m in models:
    (OUT / f"{m['id']}.lcam.json").write_text(json.dumps(m, indent=2) + "\n", encoding="utf-8")
print(f"wrote {len(models)} manifests to {OUT}")
