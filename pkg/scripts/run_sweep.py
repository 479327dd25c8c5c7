#!/usr/bin/env python3
"""Run the standard chain-length sweep on the bundled 7-node benchmark.

Defaults: lengths 1-10, all three execution modes, the greedy algorithm
with one local-search sweep, master seeds 1-10.  All flags of
``sfcplace run`` are accepted and forwarded; only the defaults differ.

    python scripts/run_sweep.py --out results/net7
    python scripts/run_sweep.py --out results/net44 --topology data/net44.topo
    SFCPLACE_WORKERS=8 python scripts/run_sweep.py --out results/fast --sweeps 0
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from sfcplace.cli import main  # noqa: E402

DEFAULTS = {
    "--topology": str(Path(__file__).resolve().parent.parent
                      / "data" / "net7.topo"),
    "--lengths": "1..10",
    "--modes": "vm-only,ct-only,vm-ct",
    "--alg": "grd",
    "--seeds": "1..10",
}

if __name__ == "__main__":
    argv = sys.argv[1:]
    for flag, value in DEFAULTS.items():
        if flag not in argv:
            argv = [flag, value] + argv
    sys.exit(main(["run"] + argv))
