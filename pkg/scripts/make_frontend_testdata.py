"""Regenerate frontend/testdata: reduced-trial reproduce CSVs for every
figure target, so the frontend test suite runs without touching Python.

Run from the repository root:  python scripts/make_frontend_testdata.py
Takes a few minutes (the correlated-fading targets dominate).
"""

import shutil
import sys
import time
from pathlib import Path

from gfra.cli import main as gfra_main

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "frontend" / "testdata"

TARGETS = {
    "fig4": "3000",
    "fig5": "3000",
    "fig7": "3000",
    "fig8": "3000",
    "fig10": "800",
    "fig11": "800",
    "fig12": "1500",
}

if __name__ == "__main__":
    for target, trials in TARGETS.items():
        dest = OUT / target
        if dest.exists():
            shutil.rmtree(dest)
        t0 = time.perf_counter()
        code = gfra_main(
            ["reproduce", target, "--trials", trials, "--out", str(dest), "--seed", "1"]
        )
        if code != 0:
            sys.exit(code)
        print(f"{target}: {time.perf_counter() - t0:.0f}s", file=sys.stderr)
