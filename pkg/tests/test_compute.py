import random

import numpy as np
import pytest

from builders import dep, emit, inp, out, process, product
from lcaforge import compute as C
from lcaforge.errors import CoefficientSumError, MissingProvider, NegativeCoefficient, SingularSystem
from lcaforge.graph import DepGraph
from lcaforge.integrity import default_ruleset
from lcaforge.manifest import parse_manifest
from lcaforge.units import Dimension
from oracles import random_process_system
from test_integrity import codes, validate

MASS = Dimension.of(mass=1)
CF = C.synthetic_cf_table()


def graph(docs):
    return DepGraph.from_manifests(parse_manifest(d) for d in docs)


def demand(pid, text="1 kg"):
    return C.DemandSpec.parse(pid, text)


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


# --- scaling -----------------------------------------------------------------

CHAIN = [
    product("laptop", deps=[dep("assembly", "production")]),
    process("assembly", [out("laptop", "1 [item]"), inp("pcb", "2 [kg]")], deps=[dep("pcb", "input")]),
    product("pcb", "kg", deps=[dep("pcb-proc", "production")]),
    process("pcb-proc", [out("pcb", "1 [kg]")], [emit("co2-fossil", "3 [kg]")]),
]


def test_hand_chain():
    s = C.scale_processes(graph(CHAIN), demand("laptop", "1 item"))
    assert s == {"assembly": 1.0, "pcb-proc": 2.0}


def test_zero_demand_scales_to_zero():
    s = C.scale_processes(graph(CHAIN), demand("laptop", "0 item"))
    assert all(v == 0 for v in s.values())


def loop_docs(steel_per_kwh="0.1", kwh_per_kg="2"):
    return [
        product("steel", "kg", deps=[dep("steel-proc", "production")]),
        process(
            "steel-proc",
            [out("steel", "1 [kg]"), inp("electricity", f"{kwh_per_kg} [kWh]")],
            [emit("co2-fossil", "1 [kg]")],
            deps=[dep("electricity", "input")],
        ),
        product("electricity", "kWh", deps=[dep("elec-proc", "production")]),
        process(
            "elec-proc",
            [out("electricity", "1 [kWh]"), inp("steel", f"{steel_per_kwh} [kg]")],
            [emit("co2-fossil", "0.5 [kg]")],
            deps=[dep("steel", "input")],
        ),
    ]


def test_two_process_loop_matches_hand_solve():
    s = C.scale_processes(graph(loop_docs()), demand("steel"))
    # (1 - 0.1 * 2) s_steel = 1, s_elec = 2 s_steel
    s_steel = 1 / (1 - 0.1 * 2)
    assert abs(s["steel-proc"] - s_steel) <= 1e-12
    assert abs(s["elec-proc"] - 2 * s_steel) <= 1e-12
    res = C.evaluate(graph(loop_docs()), demand("steel"))
    assert res.values()["climate_change"] == pytest.approx(1.25 * 1 + 2.5 * 0.5, rel=1e-12)


def test_singular_loop_is_rejected():
    with pytest.raises(SingularSystem):
        C.scale_processes(graph(loop_docs("1", "1")), demand("steel"))


def test_tree_and_matrix_agree_on_random_acyclic_systems():
    rng = random.Random(31)
    for _ in range(100):
        docs, root = random_process_system(rng, rng.randint(1, 12))
        g = graph(docs)
        tree = C.scale_processes(g, demand(root), method="tree")
        mat = C.scale_processes(g, demand(root), method="matrix")
        assert tree.keys() == mat.keys()
        for k in tree:
            assert abs(tree[k] - mat[k]) <= 1e-9 * max(abs(mat[k]), 1e-300)


def test_cyclic_random_systems_solve():
    rng = random.Random(37)
    for _ in range(20):
        docs, root = random_process_system(rng, rng.randint(2, 8), cyclic_back_edges=1)
        s = C.scale_processes(graph(docs), demand(root))
        assert all(np.isfinite(v) and v >= 0 for v in s.values())


def test_linearity(laptop):
    _, _, g = laptop
    base = C.evaluate(g, demand("laptop", "1 item")).values()
    for alpha in (0, 1, 2, 10):
        got = C.evaluate(g, demand("laptop", f"{alpha} item")).values()
        for c, v in base.items():
            assert abs(got[c] - alpha * v) <= 1e-12 * max(abs(alpha * v), 1e-300)


# --- inventory and characterization ------------------------------------------


def test_single_emitter_inventory():
    res = C.evaluate(graph(CHAIN[2:]), demand("pcb", "2 kg"))
    assert res.inventory.amounts["co2-fossil"][0] == 6.0
    assert res.values()["climate_change"] == 6.0


def test_emissions_to_one_flow_are_summed():
    res = C.evaluate(graph(CHAIN), demand("laptop", "1 item"))
    assert res.inventory.amounts["co2-fossil"][0] == 6.0


def test_uncharacterized_flows_are_listed(laptop):
    _, _, g = laptop
    res = C.evaluate(g, demand("laptop", "1 item"))
    assert res.uncharacterized == ["copper-scrap"]


def test_two_by_two_characterization_by_hand():
    cf = C.CharacterizationTable.from_json(
        {
            "table_id": "t",
            "version": "1",
            "factors": [
                {"flow": "co2-fossil", "category": "climate_change", "value": 1, "unit": "kgCO2e/kg"},
                {"flow": "so2", "category": "climate_change", "value": 0.5, "unit": "kgCO2e/kg"},
                {"flow": "co2-fossil", "category": "acidification", "value": 0.01, "unit": "molHeq/kg"},
                {"flow": "so2", "category": "acidification", "value": 2, "unit": "molHeq/kg"},
            ],
        }
    )
    inv = C.InventoryResult(
        {"co2-fossil": np.array([3.0]), "so2": np.array([0.2])},
        {"co2-fossil": MASS, "so2": MASS},
        {},
    )
    h = C.characterize(inv, cf).values()
    assert h["climate_change"] == pytest.approx(1 * 3.0 + 0.5 * 0.2, rel=1e-15)
    assert h["acidification"] == pytest.approx(0.01 * 3.0 + 2 * 0.2, rel=1e-15)


def test_demand_units_do_not_matter():
    g = graph(CHAIN[2:])
    a = C.evaluate(g, demand("pcb", "1 kg")).values()
    b = C.evaluate(g, demand("pcb", "1000 g")).values()
    assert a == pytest.approx(b, rel=1e-12)


def test_laptop_expand_matches_hand_values(laptop):
    _, _, g = laptop
    v = C.evaluate(g, demand("laptop", "1 item")).values()
    co2_kwh, so2_kwh = 0.05, 0.0001
    copper = (2 + 3 * co2_kwh, 0.01 + 3 * so2_kwh)
    pcb = (1.05 * copper[0] + 10 * co2_kwh, 1.05 * copper[1] + 10 * so2_kwh)
    alu = (1.5 + 15 * co2_kwh, 0.005 + 15 * so2_kwh)
    pcb_mass = 400 * 0.001
    co2 = pcb_mass * pcb[0] + 1.2 * alu[0] + 5 * co2_kwh
    so2 = pcb_mass * pcb[1] + 1.2 * alu[1] + 5 * so2_kwh
    assert _rel(v["climate_change"], co2) < 1e-12
    assert _rel(v["acidification"], 1.31 * so2) < 1e-12


def test_contributions_sum_to_totals(laptop):
    _, _, g = laptop
    for strategy in ("expand", "shortcut"):
        res = C.evaluate(g, demand("laptop", "1 item"), strategy)
        sums = C.leaf_sums(res.contributions)
        for c, v in res.values().items():
            assert abs(sums[c] - v) <= 1e-9 * abs(v)
            assert abs(res.contributions["total"][c] - v) <= 1e-9 * abs(v)


def test_contributions_on_random_systems():
    rng = random.Random(41)
    for k in range(30):
        docs, root = random_process_system(rng, rng.randint(1, 10), cyclic_back_edges=k % 2)
        res = C.evaluate(graph(docs), demand(root))
        sums = C.leaf_sums(res.contributions)
        for c, v in res.values().items():
            assert abs(sums[c] - v) <= 1e-9 * max(abs(v), 1e-12)


# --- allocation --------------------------------------------------------------


def _multi(co2=4.0):
    return C.ProcessInstance(
        "refinery",
        [C.Flow("a", "out", 3.0, MASS, 0), C.Flow("b", "out", 1.0, MASS, 1), C.Flow("crude", "in", 5.0, MASS, 2)],
        [C.Flow("co2-fossil", "out", co2, MASS, 0)],
    )


def test_allocation_all_to_first():
    parts = C.apply_allocation(_multi(), {"a": 1.0, "b": 0.0})
    assert parts["a"].biosphere[0].amount == 4.0 and parts["b"].biosphere[0].amount == 0.0


def test_allocation_even_split():
    parts = C.apply_allocation(_multi(), {"a": 0.5, "b": 0.5})
    assert [parts[k].biosphere[0].amount for k in "ab"] == [2.0, 2.0]
    assert parts["a"].outputs == {"a": 3.0} and parts["a"].inputs == {"crude": 2.5}


def test_mass_based_coefficients():
    assert C.mass_based_coefficients({"a": 3.0, "b": 1.0}) == {"a": 3 / 4, "b": 1 / 4}


def test_allocation_conserves_burdens():
    rng = random.Random(43)
    for _ in range(50):
        w = rng.random()
        parts = C.apply_allocation(_multi(7.3), {"a": w, "b": 1 - w})
        assert sum(p.biosphere[0].amount for p in parts.values()) == pytest.approx(7.3, rel=1e-12)
        assert sum(p.inputs["crude"] for p in parts.values()) == pytest.approx(5.0, rel=1e-12)


def test_allocation_errors():
    with pytest.raises(CoefficientSumError):
        C.apply_allocation(_multi(), {"a": 0.6, "b": 0.6})
    with pytest.raises(CoefficientSumError):
        C.apply_allocation(_multi(), {"a": 1.0})
    with pytest.raises(NegativeCoefficient):
        C.apply_allocation(_multi(), {"a": 1.5, "b": -0.5})


def test_allocated_system_end_to_end():
    docs = [
        product("a", "kg", deps=[dep("ref", "production")]),
        product("b", "kg", deps=[dep("ref", "production")]),
        process("ref", [out("a", "3 [kg]"), out("b", "1 [kg]")], [emit("co2-fossil", "4 [kg]")],
                deps=[dep("split", "allocation")]),
        {**product("split"), "kind": "AllocationModel", "body": {"a": "0.75", "b": "0.25"}},
    ]
    g = graph(docs)
    # 1 kg of a needs 1/3 of a run, carrying 0.75 of its 4 kg
    assert C.evaluate(g, demand("a")).values()["climate_change"] == pytest.approx(4 * 0.75 / 3, rel=1e-12)
    assert C.evaluate(g, demand("b")).values()["climate_change"] == pytest.approx(4 * 0.25 / 1, rel=1e-12)


# --- dual path ----------------------------------------------------------------


def test_compare_within_one_percent(laptop):
    _, _, g = laptop
    res = C.evaluate(g, demand("laptop", "1 item"), "compare")
    assert set(res.deviation) == {"climate_change", "acidification"}
    assert all(d <= 0.01 for d in res.deviation.values())


def test_shortcut_values(laptop):
    _, _, g = laptop
    v = C.evaluate(g, demand("laptop", "1 item"), "shortcut").values()
    assert _rel(v["climate_change"], 2.95 + 0.00276 * 400) < 1e-12
    assert _rel(v["acidification"], 0.01087 + 0.0000155 * 400) < 1e-12


def test_perturbed_subtree_trips_shortcut_consistency():
    import json

    from conftest import laptop_paths

    docs = [json.loads(p.read_text()) for p in laptop_paths()]
    rec, _ = validate(docs, "laptop")
    assert rec.violations == []
    for d in docs:
        if d["id"] == "laptop-assembly":
            for x in d["body"]["technosphere"]:
                if x["product_id"] == "aluminium":
                    x["amount"] = "1.32 [kg]"
    rec, _ = validate(docs, "laptop")
    assert "SHORTCUT_CONSISTENCY" in codes(rec)


def test_expand_without_provider():
    with pytest.raises(MissingProvider):
        C.evaluate(graph([product("lonely", "kg")]), demand("lonely"))


def test_result_json_has_no_infinities(laptop):
    _, _, g = laptop
    doc = C.evaluate(g, demand("laptop", "1 item"), "compare").to_json()
    assert doc["impacts"]["climate_change"]["unit"] == "kgCO2e"
    assert doc["strategy"] == "Compare"
