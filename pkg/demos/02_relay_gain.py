"""Paired comparison of the three schemes on identical user trajectories.

Run with ``python3 demos/02_relay_gain.py [horizon] [seeds]``; defaults are
kept small so the script finishes in about a minute.
"""
# %%
import sys

from flybs.cli import cmd_compare
from flybs.config import load_scenario

horizon = int(sys.argv[1]) if len(sys.argv) > 1 else 60
seeds = range(int(sys.argv[2]) if len(sys.argv) > 2 else 3)

# %% Every scheme sees the same users: trajectories are generated once per seed and replayed.
base = load_scenario({"n_users": 300, "m_flybss": 3, "horizon": horizon})
rows = cmd_compare(base, ["three_hop", "two_hop", "static"], list(seeds))

# %% Gains are per-seed percentages, averaged, with a t-interval across seeds.
for r in rows:
    print(f"{r['scheme']:>9} vs {r['baseline']:<9} {r['gain_pct']:+7.1f}%  "
          f"[{r['ci_low_pct']:+.1f}, {r['ci_high_pct']:+.1f}]  n={r['n']}")
