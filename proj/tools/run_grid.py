#!/usr/bin/env python3
"""Full simulation grid: 96 cells, each under the null and at 80% power.

Long-running; not part of the test suite. Each cell writes its scenario,
operating-characteristic CSV and plot data into --out, and one summary
row per (cell, hypothesis, method) goes to --out/summary.csv.
"""

import argparse
import csv
import itertools
import math
import subprocess
import sys
from pathlib import Path

GRID = {
    "n": [200, 400],
    "tau": [1, 3],
    "censor_rate": [0.0, -math.log(0.95)],
    "accrual": [2, 4],
    "covariates": ["normal1", "bernoulli2"],
    "phi": [0.0, math.log(1.5), math.log(2.0)],
}


def cells():
    keys = list(GRID)
    for values in itertools.product(*(GRID[k] for k in keys)):
        yield dict(zip(keys, values))


def cell_name(c, alpha1):
    cens = "cens" if c["censor_rate"] > 0 else "nocens"
    return (f"a1_{alpha1:g}_n{c['n']}_tau{c['tau']}_{cens}_A{c['accrual']}_"
            f"{c['covariates']}_phi{math.exp(c['phi']):g}").replace(".", "p")


def scenario_text(c, alpha1, alternative, args):
    lines = [
        f"n0 = {c['n']}",
        f"n1 = {c['n']}",
        f"tau = {c['tau']}",
        f"alpha1 = {alpha1:g}",
        f"covariates = {c['covariates']}",
        f"phi = {c['phi']!r}",
        f"accrual = {c['accrual']}",
        f"censor_rate = {c['censor_rate']!r}",
        f"alpha = {args.alpha}",
        f"spending = {args.spending}",
        f"info_fractions = {args.info_fractions}",
        "methods = adjusted,km,cox",
        f"calibration_replicates = {args.calibration_replicates}",
    ]
    if alternative:
        lines.append(f"target_power = {args.power}")
    return "\n".join(lines) + "\n"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--spgs", default="build/spgs", help="path to the spgs executable")
    ap.add_argument("--out", default="grid_results", type=Path)
    ap.add_argument("--replicates", type=int, default=10000)
    ap.add_argument("--calibration-replicates", type=int, default=2000)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--alpha1", type=float, action="append",
                    help="Weibull shape difference; repeatable (default: 0 and -1)")
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--spending", default="power:3")
    ap.add_argument("--info-fractions", default="0.5,0.75,1")
    ap.add_argument("--power", type=float, default=0.8)
    ap.add_argument("--limit", type=int, help="run only the first N cells")
    ap.add_argument("--dry-run", action="store_true", help="write scenarios only")
    args = ap.parse_args()

    alpha1s = args.alpha1 or [0.0, -1.0]
    args.out.mkdir(parents=True, exist_ok=True)
    todo = [(a1, c) for a1 in alpha1s for c in cells()]
    if args.limit:
        todo = todo[: args.limit]

    summary_path = args.out / "summary.csv"
    with open(summary_path, "w", newline="") as fh:
        summary = csv.writer(fh)
        summary.writerow(["cell", "hypothesis", "method", "stage", "cum_rejection", "se",
                          "nominal", "failures"])
        for i, (alpha1, c) in enumerate(todo):
            name = cell_name(c, alpha1)
            for hyp in ("null", "alternative"):
                stem = args.out / f"{name}_{hyp}"
                scen = Path(f"{stem}.scenario")
                scen.write_text(scenario_text(c, alpha1, hyp == "alternative", args))
                if args.dry_run:
                    continue
                print(f"[{i + 1}/{len(todo)}] {name} {hyp}", file=sys.stderr, flush=True)
                oc = Path(f"{stem}.csv")
                subprocess.run(
                    [args.spgs, "simulate", str(scen), "--replicates", str(args.replicates),
                     "--seed", str(args.seed + i), "--workers", str(args.workers),
                     "--out", str(oc), "--plot-data", f"{stem}_plot.csv"],
                    check=True)
                rows = [r for r in oc.read_text().splitlines() if not r.startswith("#")]
                for r in csv.DictReader(rows):
                    summary.writerow([name, hyp, r["method"], r["stage"], r["cum_rejection"],
                                      r["se"], r["nominal_alpha"], r["failures"]])
                fh.flush()
    print(f"summary: {summary_path}", file=sys.stderr)


if __name__ == "__main__":
    main()
