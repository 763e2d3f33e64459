import random

import pytest

from builders import dep, product
from conftest import laptop_paths
from lcaforge.errors import DanglingSupersede, DuplicateAdvisoryId, DuplicateVersion, NotFound, Unsatisfiable
from lcaforge.manifest import load_manifest, parse_manifest
from lcaforge.registry import Advisory, Lockfile, Registry, resolve
from lcaforge.versions import Version, VersionReq
from oracles import dominates, random_registry_docs, registry_from_docs, valid_assignments

ANY = VersionReq.parse(">=0.0.0")


def _reg(*docs):
    r = Registry.memory()
    for d in docs:
        r.publish(parse_manifest(d))
    return r


def _adv(aid="LCA-2024-0001", mid="pcb", req="<=1.2.0", severity="Warning", superseded_by=None):
    return Advisory(aid, mid, VersionReq.parse(req), severity, "test", "2024-01-01T00:00:00Z", superseded_by)


def test_version_requirements():
    v = Version.parse
    assert VersionReq.parse("^1.2.0").matches(v("1.9.9")) and not VersionReq.parse("^1.2.0").matches(v("2.0.0"))
    assert VersionReq.parse("=1.0.0").matches(v("1.0.0")) and not VersionReq.parse("=1.0.0").matches(v("1.0.1"))
    r = VersionReq.parse(">=1.0.0,<2.0.0")
    assert r.matches(v("1.5.0")) and not r.matches(v("2.0.0"))
    for bad in ("", "1.0", "^x", ">=1.0.0,>=2.0.0"):
        with pytest.raises(ValueError):
            VersionReq.parse(bad)


def test_publish_records_hash_and_is_idempotent():
    r = Registry.memory()
    m = parse_manifest(product("a"))
    h = r.publish(m)
    assert r.entry("a", "1.0.0").hash == h == m.hash
    snap = r.snapshot_hash()
    assert r.publish(parse_manifest(product("a"))) == h
    assert r.snapshot_hash() == snap


def test_republish_with_altered_body_is_rejected():
    r = _reg(product("a"))
    with pytest.raises(DuplicateVersion):
        r.publish(parse_manifest(product("a", unit="kg")))
    assert r.get("a", "1.0.0").body.reference_unit.symbol == "item"


def test_yank_keeps_manifest_retrievable():
    r = _reg(product("a"), product("a", version="1.1.0"))
    r.yank("a", "1.1.0")
    assert r.get("a", "1.1.0").id == "a"
    assert [e.yanked for e in r.list_versions("a")] == [False, True]
    assert resolve("a", VersionReq.parse("^1.0.0"), r).pin_map()["a"][0] == "1.0.0"
    with pytest.raises(NotFound):
        r.yank("a", "9.9.9")


def test_exact_pin_of_yanked_version_needs_opt_in():
    r = _reg(product("a"), product("a", version="1.1.0"))
    r.yank("a", "1.1.0")
    with pytest.raises(Unsatisfiable):
        resolve("a", VersionReq.parse("=1.1.0"), r)
    assert resolve("a", VersionReq.parse("=1.1.0"), r, allow_yanked=True).root_version == "1.1.0"


def test_highest_compatible_version():
    r = _reg(*(product("a", version=v) for v in ("1.0.0", "1.2.3", "2.0.0")))
    assert resolve("a", VersionReq.parse("^1.0.0"), r).root_version == "1.2.3"


def test_list_versions():
    r = _reg(product("a", version="1.2.3"), product("a"))
    assert [str(e.version) for e in r.list_versions("a")] == ["1.0.0", "1.2.3"]
    with pytest.raises(NotFound):
        r.list_versions("zzz")


def test_diamond_conflict_reports_chain():
    docs = [
        product("a", deps=[dep("b", "component"), dep("c", "component")]),
        product("b", deps=[dep("d", "component", "=1.0.0")]),
        product("c", deps=[dep("d", "component", "^1.1.0")]),
        product("d"),
        product("d", version="1.1.0"),
    ]
    with pytest.raises(Unsatisfiable) as info:
        resolve("a", ANY, _reg(*docs))
    chain = "\n".join(info.value.chain)
    assert "b@1.0.0 requires d =1.0.0" in chain and "c@1.0.0 requires d ^1.1.0" in chain
    assert valid_assignments(docs, "a", ANY) == []


def test_resolve_is_byte_identical_and_order_independent():
    rng = random.Random(3)
    docs = random_registry_docs(rng, 8)
    base = resolve("m0", ANY, registry_from_docs(docs)).canonical()
    for _ in range(5):
        order = list(range(len(docs)))
        rng.shuffle(order)
        assert resolve("m0", ANY, registry_from_docs(docs, order)).canonical() == base


def test_resolved_pins_are_pareto_maximal():
    rng = random.Random(11)
    checked = 0
    for _ in range(60):
        docs = random_registry_docs(rng, rng.randint(1, 5), max_versions=3)
        reg = registry_from_docs(docs)
        sols = valid_assignments(docs, "m0", ANY)
        try:
            lock = resolve("m0", ANY, reg)
        except Unsatisfiable:
            continue
        got = {m: Version.parse(v) for m, (v, _) in lock.pin_map().items()}
        assert got in sols
        assert not any(dominates(s, got) for s in sols)
        checked += 1
    assert checked >= 30


def test_lockfile_round_trip(tmp_path):
    r = Registry.memory()
    for p in laptop_paths():
        r.publish(load_manifest(p))
    lock = resolve("laptop", VersionReq.parse("^1.0.0"), r)
    lock.save(tmp_path / "l.json")
    again = Lockfile.load(tmp_path / "l.json")
    assert again.canonical() == lock.canonical() and again.hash == lock.hash
    assert len(lock.pins) == 12


def test_on_disk_registry(tmp_path):
    r = Registry.init(tmp_path / "reg")
    r.publish(parse_manifest(product("a")))
    again = Registry(tmp_path / "reg")
    assert again.get("a", "1.0.0").hash == r.entry("a", "1.0.0").hash
    with pytest.raises(NotFound):
        Registry(tmp_path / "missing")


def test_advisories():
    r = _reg(product("pcb"))
    r.publish_advisory(_adv())
    assert [a.advisory_id for a in r.advisories()] == ["LCA-2024-0001"]
    with pytest.raises(DuplicateAdvisoryId):
        r.publish_advisory(_adv())
    with pytest.raises(DanglingSupersede):
        r.publish_advisory(_adv("LCA-2024-0002", superseded_by="LCA-2099-0001"))
    r.publish_advisory(_adv("LCA-2024-0003", superseded_by="LCA-2024-0001"))
    with pytest.raises(NotFound):
        r.publish_advisory(_adv("LCA-2024-0004", mid="nobody"))


def test_advisory_json_round_trip():
    a = _adv()
    assert Advisory.from_json(a.to_json()) == a
