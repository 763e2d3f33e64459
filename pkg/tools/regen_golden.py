"""Regenerate tests/golden from the current code. Review the diff before committing."""

import shutil
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from golden_pipeline import GOLDEN, OUTPUTS, run_pipeline  # noqa: E402


def main():
    with tempfile.TemporaryDirectory() as tmp:
        codes = run_pipeline(Path(tmp))
        print("exit codes:", codes)
        for golden, produced in OUTPUTS.items():
            shutil.copyfile(Path(tmp) / produced, GOLDEN / golden)
            print("wrote", GOLDEN / golden)


if __name__ == "__main__":
    main()
