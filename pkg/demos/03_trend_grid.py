"""Seeds-by-cells grid behind the trend checks: sum capacity against N, against M, and the relay gain.

Each finished run appends one JSON line to the output file, so an interrupted
grid resumes where it stopped. Run with
``python3 demos/03_trend_grid.py [horizon] [seeds] [out.jsonl]`` and then
``python3 demos/03_trend_grid.py --report out.jsonl``.
"""
# %%
import json
import sys
import time
from collections import defaultdict
from pathlib import Path

import numpy as np

from flybs.config import load_scenario
from flybs.engine import simulate

CELLS = [("three_hop", n, 2) for n in (200, 300, 400, 600, 800)]
CELLS += [("three_hop", 200, m) for m in (3, 4, 5)]
CELLS += [("three_hop", 300, 3), ("two_hop", 300, 3)]


def run_grid(horizon: int, seeds: int, out: Path) -> None:
    done = set()
    if out.exists():
        done = {(d["scheme"], d["N"], d["M"], d["seed"]) for d in map(json.loads, out.read_text().splitlines())}
    for seed in range(seeds):
        for scheme, n, m in CELLS:
            if (scheme, n, m, seed) in done:
                continue
            t0 = time.perf_counter()
            s = load_scenario({"n_users": n, "m_flybss": m, "horizon": horizon, "scheme": scheme, "seed": seed},
                              env={})
            cap = float(np.mean([r.sum_capacity for r in simulate(s).reports]))
            row = {"scheme": scheme, "N": n, "M": m, "seed": seed, "cap": cap, "t": time.perf_counter() - t0}
            with open(out, "a") as f:
                f.write(json.dumps(row) + "\n")
            print(row, flush=True)


def report(out: Path) -> None:
    cells = defaultdict(list)
    for d in map(json.loads, out.read_text().splitlines()):
        cells[(d["scheme"], d["N"], d["M"])].append(d["cap"] / 1e6)
    for key in CELLS:
        v = np.array(cells.get(key, []))
        if v.size:
            print(f"{key[0]:>9} N={key[1]:<4} M={key[2]}  {v.mean():7.1f} Mbps  (sd {v.std(ddof=min(1, v.size - 1)):5.1f}, "
                  f"{v.size} seeds)")


# %%
if __name__ == "__main__":
    if sys.argv[1:2] == ["--report"]:
        report(Path(sys.argv[2]))
    else:
        horizon = int(sys.argv[1]) if len(sys.argv) > 1 else 1200
        seeds = int(sys.argv[2]) if len(sys.argv) > 2 else 10
        out = Path(sys.argv[3]) if len(sys.argv) > 3 else Path("trend_grid.jsonl")
        run_grid(horizon, seeds, out)
        report(out)
