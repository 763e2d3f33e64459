import math
import warnings

import numpy as np
import pytest

from builders import dep, doc, emit, out, process, product, q
from lcaforge import compute as C
from lcaforge import uncertainty as U
from lcaforge.errors import EmptySamples
from lcaforge.graph import DepGraph
from lcaforge.manifest import PEDIGREE_INDICATORS, parse_manifest

FT = U.synthetic_factor_table()
CF = C.synthetic_cf_table()
LAPTOP = C.DemandSpec.parse("laptop", "1 item")


def table_with(indicator, score, factor):
    rows = {name: [1.0, 1.0, 1.0, 1.0, 1.0] for name in PEDIGREE_INDICATORS}
    rows[indicator] = [1.0] + [factor if s >= score else 1.0 for s in range(2, 6)]
    return U.FactorTable("t", "1", {k: tuple(v) for k, v in rows.items()})


def test_all_ones_is_degenerate():
    assert U.pedigree_sigma((1, 1, 1, 1, 1), 1.0, FT) == 0.0
    d = U.pedigree_to_distribution(5.0, (1, 1, 1, 1, 1), 1.0, FT)
    assert np.array_equal(d.ppf(np.linspace(0.001, 0.999, 50)), np.full(50, 5.0))


def test_single_factor_e_gives_unit_sigma():
    t = table_with("reliability", 2, math.e)
    assert U.pedigree_sigma((2, 1, 1, 1, 1), 1.0, t) == 1.0
    assert U.pedigree_sigma((1, 1, 1, 1, 1), math.e, FT) == 1.0


def test_sigma_formula_against_shipped_table():
    # scores (2, 3, 1, 1, 1): reliability U=1.05, completeness U=1.05
    expected = math.sqrt(math.log(1.05) ** 2 + math.log(1.05) ** 2)
    assert U.pedigree_sigma((2, 3, 1, 1, 1), 1.0, FT) == pytest.approx(expected, rel=1e-15)
    with_basic = math.sqrt(math.log(1.05) ** 2 * 3)
    assert U.pedigree_sigma((2, 3, 1, 1, 1), 1.05, FT) == pytest.approx(with_basic, rel=1e-15)


def test_sigma_grows_with_scores():
    for ind in range(5):
        prev = 0.0
        for s in range(1, 6):
            scores = [1] * 5
            scores[ind] = s
            cur = U.pedigree_sigma(scores, 1.0, FT)
            assert cur >= prev
            prev = cur


def test_factor_table_validation():
    rows = {name: (1.0, 1.1, 1.2, 1.3, 1.4) for name in PEDIGREE_INDICATORS}
    U.FactorTable("ok", "1", rows)
    with pytest.raises(ValueError):
        U.FactorTable("bad", "1", {**rows, "reliability": (1.1, 1.1, 1.2, 1.3, 1.4)})
    with pytest.raises(ValueError):
        U.FactorTable("bad", "1", {**rows, "reliability": (1.0, 1.3, 1.2, 1.3, 1.4)})


def test_non_positive_value_becomes_point():
    notes = []
    assert U.pedigree_to_distribution(0.0, (2, 2, 2, 2, 2), 1.0, FT, notes) == U.Point(0.0)
    assert len(notes) == 1
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        U.pedigree_to_distribution(-1.0, (2, 2, 2, 2, 2), 1.0, FT)
    assert issubclass(w[0].category, U.NonPositiveValue)


def test_distribution_samples():
    assert U.sample(U.Point(7), U.Stream(1, 0)) == 7
    u = np.linspace(1e-9, 1 - 1e-9, 1001)
    x = U.Uniform(0, 1).ppf(u)
    assert x.min() >= 0 and x.max() <= 1
    t = U.Triangular(0, 1, 4).ppf(u)
    assert t.min() >= 0 and t.max() <= 4
    assert U.Lognormal(2.0, 0.7).ppf(np.array([0.5]))[0] == pytest.approx(2.0, rel=1e-15)


def test_lognormal_empirical_median():
    u = U.kernels.counter_uniforms(99, 0, 100_000, 1)[:, 0]
    x = U.Lognormal(3.0, 0.5).ppf(u)
    assert abs(np.median(x) / 3.0 - 1) < 0.005


def test_summarize_examples():
    s = U.summarize({"c": [1.0, 2.0, 3.0]})["c"]
    assert s["mean"] == 2.0
    assert U.summarize({"c": [4.2] * 7})["c"]["sd"] == 0.0
    assert U.summarize({"c": [1.0, 3.0]}, (0.5,))["c"]["quantiles"]["0.5"] == 2.0
    one = U.summarize({"c": [5.5]})["c"]
    assert one["mean"] == 5.5 and set(one["quantiles"].values()) == {5.5}
    with pytest.raises(EmptySamples):
        U.summarize({"c": []})


def test_point_only_model_has_zero_spread():
    docs = [
        product("w", "kg", deps=[dep("w-proc", "production")]),
        process("w-proc", [out("w", "1 [kg]")], [emit("co2-fossil", "k * 1 [kg]")],
                params=[{"name": "k", "dimension": "1", "default": q(2.5, "1"), "pedigree": [1, 1, 1, 1, 1]}]),
    ]
    g = DepGraph.from_manifests(parse_manifest(d) for d in docs)
    res = U.monte_carlo(g, C.DemandSpec.parse("w", "1 kg"), "expand", CF, U.MCConfig(1000, 3))
    st = res.stats["climate_change"]
    assert st["sd"] == 0.0 and st["mean"] == res.deterministic["climate_change"] == 2.5


def test_laptop_median_and_reproducibility(laptop):
    _, _, g = laptop
    a = U.monte_carlo(g, LAPTOP, "expand", CF, U.MCConfig(100_000, 42), keep_samples=True)
    for c in a.stats:
        assert abs(a.stats[c]["median"] / a.deterministic[c] - 1) <= 0.005
    assert a.stats["climate_change"]["sd"] > 0
    b = U.monte_carlo(g, LAPTOP, "expand", CF, U.MCConfig(100_000, 42), workers=4, keep_samples=True)
    assert a.to_json() == b.to_json()
    assert all(np.array_equal(a.samples[c], b.samples[c]) for c in a.samples)


def test_chunking_does_not_change_samples(laptop):
    _, _, g = laptop
    a = U.monte_carlo(g, LAPTOP, "expand", CF, U.MCConfig(3000, 5), chunk=4096, keep_samples=True)
    b = U.monte_carlo(g, LAPTOP, "expand", CF, U.MCConfig(3000, 5), chunk=7, workers=3, keep_samples=True)
    assert all(np.array_equal(a.samples[c], b.samples[c]) for c in a.samples)


def test_different_seeds_differ(laptop):
    _, _, g = laptop
    a = U.monte_carlo(g, LAPTOP, "expand", CF, U.MCConfig(500, 1))
    b = U.monte_carlo(g, LAPTOP, "expand", CF, U.MCConfig(500, 2))
    assert a.stats["climate_change"]["mean"] != b.stats["climate_change"]["mean"]


def test_wider_pedigree_widens_spread(laptop):
    _, _, g = laptop
    narrow = U.monte_carlo(g, LAPTOP, "expand", CF, U.MCConfig(5000, 8))
    wide_table = table_with("reliability", 2, 1.5)
    wide = U.monte_carlo(g, LAPTOP, "expand", CF, U.MCConfig(5000, 8), factor_table=wide_table)
    assert wide.stats["climate_change"]["sd"] > narrow.stats["climate_change"]["sd"]


def test_uncertainty_model_overrides_pedigree():
    docs = [
        product("w", "kg", deps=[dep("w-proc", "production")]),
        process("w-proc", [out("w", "1 [kg]")], [emit("co2-fossil", "k * 1 [kg]")],
                params=[{"name": "k", "dimension": "1", "default": q(2.0, "1"), "pedigree": [3, 3, 3, 3, 3]}],
                deps=[dep("w-unc", "uncertainty")]),
        doc("w-unc", "UncertaintyModel", {"k": {"type": "uniform", "lo": q(1, "1"), "hi": q(3, "1")}}),
    ]
    g = DepGraph.from_manifests(parse_manifest(d) for d in docs)
    (item,) = U.uncertain_items(g)
    assert item.dist == U.Uniform(1.0, 3.0)
    res = U.monte_carlo(g, C.DemandSpec.parse("w", "1 kg"), "expand", CF, U.MCConfig(20_000, 4))
    assert res.stats["climate_change"]["mean"] == pytest.approx(2.0, rel=0.01)
