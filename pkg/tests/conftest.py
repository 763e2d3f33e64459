import os
from pathlib import Path

import pytest

from lcaforge import graph as G
from lcaforge.manifest import load_manifest
from lcaforge.registry import Registry, resolve
from lcaforge.versions import VersionReq

os.environ.setdefault("SOURCE_DATE_EPOCH", "1700000000")

CORPUS = Path(__file__).resolve().parents[1] / "src" / "lcaforge" / "data" / "corpus" / "laptop"
GOLDEN = Path(__file__).resolve().parent / "golden"


def laptop_paths():
    return sorted(CORPUS.glob("*.lcam.json"))


def laptop_registry():
    reg = Registry.memory()
    for p in laptop_paths():
        reg.publish(load_manifest(p))
    return reg


@pytest.fixture(scope="session")
def laptop():
    reg = laptop_registry()
    lock = resolve("laptop", VersionReq.parse("^1.0.0"), reg)
    return reg, lock, G.build_graph(lock, reg)


# --- acceptance reporting ------------------------------------------------------
import time

ACCEPTANCE_LINES: list = []
_SESSION_START = time.perf_counter()
SUITE_BUDGET_S = 120.0


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        tr.write_line(line)
    elapsed = time.perf_counter() - _SESSION_START
    verdict = "PASS" if elapsed < SUITE_BUDGET_S else "FAIL"
    tr.write_line(f"{verdict}  suite wall time: {elapsed:.1f} s (budget {SUITE_BUDGET_S:.0f} s)")
