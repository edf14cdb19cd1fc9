"""Command-line entry point: ``flybs run|sweep|compare|validate``.

Outputs land in ``--out`` (or ``$FLYBS_OUT``, default ``./flybs_out``):

* ``run``     ``steps.csv`` plus ``summary.json``
* ``sweep``   ``sweep.csv`` with mean/std per (scheme, value) cell
* ``compare`` ``compare.csv`` with paired percentage gains per scheme pair

Exit status is 0 on success, 2 on an invalid scenario and 3 on I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy import stats

from .config import SCHEMES, Scenario, ScenarioError, load_scenario, scenario_to_dict
from .engine import INFEASIBLE_FLAGS, audit, simulate, trajectory_checksum
from .mobility import generate_trajectory

log = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1
STEP_COLUMNS = (
    "step",
    "sum_capacity_bps",
    "mean_user_capacity_bps",
    "associated_users",
    "backhaul_margin_access_min",
    "backhaul_margin_gbs",
    "flags",
    "inner_iters",
)
SWEEP_AXES = ("n_users", "m_flybss")
EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 2, 3


@dataclasses.dataclass(frozen=True)
class RunArtifact:
    scenario: dict
    csv_path: Path
    summary_path: Path
    runtime_s: float


def _fmt(x: float) -> str:
    return "nan" if not np.isfinite(x) else repr(float(x))


def steps_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STEP_COLUMNS)
    for r in reports:
        access_min = float(r.backhaul_margins.min()) if r.backhaul_margins.size else float("nan")
        w.writerow([
            r.time_step,
            _fmt(r.sum_capacity),
            _fmt(r.mean_user_capacity),
            r.associated_users,
            _fmt(access_min),
            _fmt(r.gbs_margin),
            "|".join(sorted(r.flags)),
            r.inner_iterations,
        ])
    return buf.getvalue()


def summarize(s: Scenario, result, runtime_s: float) -> dict:
    reps = result.reports
    caps = np.array([r.sum_capacity for r in reps])
    flag_counts = {}
    for r in reps:
        for f in r.flags:
            flag_counts[f] = flag_counts.get(f, 0) + 1
    return {
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "scheme": s.scheme,
        "seed": s.seed,
        "n_users": s.n_users,
        "m_flybss": s.m_flybss,
        "steps": len(reps),
        "mean_sum_capacity_bps": float(caps.mean()) if len(caps) else 0.0,
        "mean_user_capacity_bps": float(caps.mean() / s.n_users) if len(caps) else 0.0,
        "violations": audit(reps, s),
        "infeasible_steps": sum(bool(r.flags & INFEASIBLE_FLAGS) for r in reps),
        "flag_counts": dict(sorted(flag_counts.items())),
        "trajectory_checksum": result.trajectory_checksum,
        "runtime_s": runtime_s,
    }


def cmd_run(s: Scenario, out: Path) -> RunArtifact:
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = simulate(s)
    runtime = time.perf_counter() - t0
    csv_path, summary_path = out / "steps.csv", out / "summary.json"
    csv_path.write_text(steps_csv(result.reports))
    summary = summarize(s, result, runtime)
    summary["scenario"] = scenario_to_dict(s)
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return RunArtifact(summary["scenario"], csv_path, summary_path, runtime)


def _run_cell(s: Scenario, trajectory=None) -> dict:
    t0 = time.perf_counter()
    result = simulate(s, trajectory=trajectory)
    return summarize(s, result, time.perf_counter() - t0)


def _safe_cell(args):
    s, traj = args
    try:
        return _run_cell(s, traj)
    except Exception as exc:  # a failed cell is reported, the sweep goes on
        log.warning("cell scheme=%s seed=%s failed: %s", s.scheme, s.seed, exc)
        return {"error": f"{type(exc).__name__}: {exc}"}


def _map(jobs: int, items):
    if jobs <= 1 or len(items) <= 1:
        return [_safe_cell(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_safe_cell, items))


def _mean_std(xs):
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        return float("nan"), float("nan")
    return float(xs.mean()), float(xs.std(ddof=1)) if xs.size > 1 else 0.0


def cmd_sweep(base: Scenario, axis: str, values, seeds, schemes=None, jobs: int = 1) -> list[dict]:
    """Mean and standard deviation of time-averaged metrics per (scheme, value) cell."""
    if axis not in SWEEP_AXES:
        raise ScenarioError("axis", f"must be one of {SWEEP_AXES}")
    schemes = list(schemes or [base.scheme])
    grid, invalid = [], {}
    for scheme in schemes:
        for v in values:
            for seed in seeds:
                try:
                    s = load_scenario(scenario_to_dict(base) | {axis: v, "scheme": scheme, "seed": seed}, env={})
                except ScenarioError as exc:
                    log.warning("cell %s=%s scheme=%s is invalid: %s", axis, v, scheme, exc)
                    invalid[len(grid)] = {"error": f"ScenarioError: {exc}"}
                    s = None
                grid.append((scheme, v, seed, s))
    runnable = [i for i in range(len(grid)) if i not in invalid]
    done = dict(zip(runnable, _map(jobs, [(grid[i][3], None) for i in runnable])))
    results = [invalid.get(i) or done[i] for i in range(len(grid))]
    rows = []
    for scheme in schemes:
        for v in values:
            cell = [r for (sc, vv, _, _), r in zip(grid, results) if sc == scheme and vv == v]
            ok = [r for r in cell if "error" not in r]
            sc_mean, sc_std = _mean_std([r["mean_sum_capacity_bps"] for r in ok])
            uc_mean, uc_std = _mean_std([r["mean_user_capacity_bps"] for r in ok])
            rows.append({
                "scheme": scheme, axis: v, "seeds": len(ok), "failed": len(cell) - len(ok),
                "sum_capacity_mean_bps": sc_mean, "sum_capacity_std_bps": sc_std,
                "user_capacity_mean_bps": uc_mean, "user_capacity_std_bps": uc_std,
            })
    return rows


def paired_gain(a, b, confidence: float = 0.95) -> dict:
    """Percentage gain of ``a`` over ``b`` per seed, with a t-interval on the mean."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    g = 100.0 * (a - b) / b
    mean = float(g.mean())
    if g.size < 2 or np.all(g == g[0]):
        return {"gain_pct": mean, "ci_low_pct": mean, "ci_high_pct": mean, "n": int(g.size)}
    half = float(stats.t.ppf(0.5 + confidence / 2, g.size - 1) * g.std(ddof=1) / np.sqrt(g.size))
    return {"gain_pct": mean, "ci_low_pct": mean - half, "ci_high_pct": mean + half, "n": int(g.size)}


def cmd_compare(base: Scenario, schemes, seeds, jobs: int = 1) -> list[dict]:
    """Paired scheme comparison on shared user trajectories."""
    schemes = list(schemes)
    grid, checks = [], {}
    for seed in seeds:
        s0 = base.replace(seed=seed)
        traj = generate_trajectory(s0.mobility_spec(), s0.n_users, s0.horizon, seed)
        checks[seed] = trajectory_checksum(traj)
        for scheme in schemes:
            grid.append((scheme, seed, s0.replace(scheme=scheme), traj))
    results = _map(jobs, [(s, traj) for _, _, s, traj in grid])
    by = {}
    for (scheme, seed, _, _), r in zip(grid, results):
        if "error" not in r and r["trajectory_checksum"] != checks[seed]:
            raise RuntimeError(f"trajectory mismatch for seed {seed}")
        by[(scheme, seed)] = r
    rows = []
    for i, a in enumerate(schemes):
        for b in schemes[i + 1:]:
            ok = [sd for sd in seeds if "error" not in by[(a, sd)] and "error" not in by[(b, sd)]]
            ca = [by[(a, sd)]["mean_sum_capacity_bps"] for sd in ok]
            cb = [by[(b, sd)]["mean_sum_capacity_bps"] for sd in ok]
            row = {"scheme": a, "baseline": b, "failed": len(seeds) - len(ok)}
            row.update(paired_gain(ca, cb) if ok else {"gain_pct": float("nan"), "ci_low_pct": float("nan"),
                                                        "ci_high_pct": float("nan"), "n": 0})
            rows.append(row)
    return rows


def parse_seeds(text: str) -> list[int]:
    """``"3"`` -> [3], ``"0..4"`` -> [0, 1, 2, 3, 4], ``"1,5,9"`` -> [1, 5, 9]."""
    text = text.strip()
    if ".." in text:
        lo, hi = (int(t) for t in text.split("..", 1))
        if hi < lo:
            raise ValueError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(t) for t in text.split(",") if t.strip()]


def parse_list(text: str, cast=str) -> list:
    return [cast(t.strip()) for t in text.split(",") if t.strip()]


def write_table(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        if not rows:
            return
        w = csv.DictWriter(f, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flybs", description="Three-hop FlyBS network simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seeds_default="0"):
        sp.add_argument("--scenario", help="scenario JSON file (defaults to the reference scenario)")
        sp.add_argument("--out", help="output directory (env FLYBS_OUT)")
        sp.add_argument("--seeds", default=seeds_default, help="a..b, a,b,c or a single seed")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")

    r = sub.add_parser("run", help="simulate one scenario")
    r.add_argument("--scenario")
    r.add_argument("--out")
    r.add_argument("--scheme", choices=SCHEMES)
    r.add_argument("--seeds", help="single seed overriding the scenario's")

    s = sub.add_parser("sweep", help="grid over one scenario axis")
    common(s, "0..99")
    s.add_argument("--axis", required=True, choices=SWEEP_AXES)
    s.add_argument("--values", required=True, help="comma-separated axis values")
    s.add_argument("--scheme", help="comma-separated schemes (default: the scenario's)")

    c = sub.add_parser("compare", help="paired comparison of schemes")
    common(c, "0..99")
    c.add_argument("--scheme", default="three_hop,two_hop", help="comma-separated schemes")

    v = sub.add_parser("validate", help="check a scenario file and print it with defaults filled in")
    v.add_argument("--scenario")
    return p


def _schemes(text):
    names = parse_list(text)
    bad = [n for n in names if n not in SCHEMES]
    if bad or not names:
        raise ScenarioError("scheme", f"unknown scheme {bad[0] if bad else '<empty>'!r}")
    return names


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get("FLYBS_OUT") or "flybs_out")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        base = load_scenario(args.scenario)
        if args.command == "validate":
            print(json.dumps(scenario_to_dict(base), indent=2, sort_keys=True))
            return EXIT_OK
        if args.command == "run":
            if args.scheme:
                base = load_scenario(scenario_to_dict(base) | {"scheme": args.scheme}, env={})
            if args.seeds:
                seeds = parse_seeds(args.seeds)
                if len(seeds) != 1:
                    raise ScenarioError("seeds", "run takes a single seed")
                base = base.replace(seed=seeds[0])
            art = cmd_run(base, _out_dir(args))
            print(f"wrote {art.csv_path} and {art.summary_path} in {art.runtime_s:.1f} s")
            return EXIT_OK
        seeds = parse_seeds(args.seeds)
        out = _out_dir(args)
        if args.command == "sweep":
            rows = cmd_sweep(base, args.axis, parse_list(args.values, int), seeds,
                             _schemes(args.scheme) if args.scheme else None, args.jobs)
            write_table(out / "sweep.csv", rows)
            print(f"wrote {out / 'sweep.csv'} ({len(rows)} cells)")
        else:
            rows = cmd_compare(base, _schemes(args.scheme), seeds, args.jobs)
            write_table(out / "compare.csv", rows)
            for row in rows:
                print(f"{row['scheme']} vs {row['baseline']}: {row['gain_pct']:+.2f}% "
                      f"[{row['ci_low_pct']:+.2f}, {row['ci_high_pct']:+.2f}] over {row['n']} seeds")
        return EXIT_OK
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
