#!/usr/bin/env python3
"""Monte Carlo decay of the grouped cross-product statistic on Brownian paths.

For each coarse level of a random balanced sequence, selects the reference
dyadic level for the requested coarsening exponent, computes the statistic
over a batch of seeds, and writes per-seed values plus a median/variance
summary.  Defaults reproduce the desk-scale acceptance experiment (this is
minutes of compute at the default master level).
"""

import argparse
import json
from pathlib import Path

import numpy as np

import pathqv as pq
from pathqv.io import fmt_float


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--master-level", type=int, default=23)
    ap.add_argument("--levels", type=int, nargs=2, default=[6, 12], metavar=("LO", "HI"))
    ap.add_argument("--c-target", type=float, default=3.0)
    ap.add_argument("--beta", type=float, default=0.5)
    ap.add_argument("--seeds", type=int, default=200)
    ap.add_argument("--partition-seed", type=int, default=7)
    ap.add_argument("--out", default="results/roughness_decay")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    M, T = args.master_level, 1.0
    lo, hi = args.levels
    coarse = pq.gen_random_balanced(args.partition_seed, range(lo, hi + 1), M, T, args.c_target)
    reference = pq.gen_dyadic(range(lo, M + 1), M, T)
    sel = pq.select_dyadic_subsequence(coarse, args.beta, reference)
    print(f"selected reference levels: {dict(zip(sel.level_ids, sel.l))}")

    rows = []
    svals = {n: [] for n in sel.level_ids}
    for seed in range(args.seeds):
        w = pq.gen_brownian(seed, M, T)
        for n, l in zip(sel.level_ids, sel.l):
            stat = pq.roughness_statistic(w, coarse.level(n), reference.level(l),
                                          coarse_level=n, fine_level=l)
            svals[n].append(stat.S)
            rows.append((n, seed, stat))
        if (seed + 1) % 25 == 0:
            print(f"  {seed + 1}/{args.seeds} seeds")

    pq.io.write_roughness_csv(rows, out / "statistics.csv")
    summary = {}
    for n in sel.level_ids:
        s = np.asarray(svals[n])
        summary[str(n)] = {
            "median_abs": float(np.median(np.abs(s))),
            "variance": float(s.var(ddof=1)),
            "variance_budget": 2.0 * T * coarse.level(n).mesh * 1.5,
            "mesh": coarse.level(n).mesh,
        }
    pq.io.write_json(summary, out / "summary.json")
    print("medians:", {n: fmt_float(v["median_abs"]) for n, v in summary.items()})
    print(f"wrote {out}/statistics.csv and {out}/summary.json")


if __name__ == "__main__":
    main()
