"""The end-to-end CLI pipeline whose outputs are committed under tests/golden.

Used by tests/test_golden.py and by tools/regen_golden.py.
"""

import contextlib
import io
import os
from pathlib import Path

from lcaforge.cli import run

HERE = Path(__file__).resolve().parent
CORPUS = HERE.parent / "src" / "lcaforge" / "data" / "corpus" / "laptop"
GOLDEN = HERE / "golden"
ADVISORY = GOLDEN / "inputs" / "advisory.json"
EPOCH = "1700000000"

# golden file name -> produced file name inside the work directory
OUTPUTS = {
    "laptop.lock.json": "laptop.lock.json",
    "laptop.lcavalid.json": "laptop.lcavalid.json",
    "impacts.json": "impacts.json",
    "mc.json": "mc.json",
    "audit.json": "audit.json",
    "graph.dot": "graph.dot",
}


def _cli(args):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = run(args)
    return code, buf.getvalue()


def run_pipeline(work: Path) -> dict:
    """Run init, publish, resolve, validate, compute, advise, audit and export; return exit codes."""
    os.environ["SOURCE_DATE_EPOCH"] = EPOCH
    work = Path(work)
    reg = ["--registry", str(work / "registry")]
    lock = str(work / "laptop.lock.json")
    codes = {}
    codes["init"], _ = _cli(["init", *reg])
    codes["publish"], _ = _cli(["publish", *reg, *map(str, sorted(CORPUS.glob("*.lcam.json")))])
    codes["resolve"], _ = _cli(["resolve", *reg, "laptop", "^1.0.0", "-o", lock])
    codes["validate"], _ = _cli(["validate", *reg, lock])
    codes["compute"], _ = _cli(
        ["compute", *reg, lock, "--demand", "1 item", "--strategy", "compare", "-o", str(work / "impacts.json")]
    )
    codes["compute_mc"], _ = _cli(
        ["compute", *reg, lock, "--demand", "1 item", "--mc", "2000", "--seed", "42", "--workers", "2",
         "-o", str(work / "mc.json")]
    )
    codes["advise"], _ = _cli(["advise", "publish", *reg, str(ADVISORY)])
    codes["audit"], text = _cli(["audit", *reg, "--json", lock])
    (work / "audit.json").write_text(text, encoding="utf-8")
    codes["export"], text = _cli(["export", *reg, lock, "--format", "dot"])
    (work / "graph.dot").write_text(text, encoding="utf-8")
    return codes
