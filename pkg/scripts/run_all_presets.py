#!/usr/bin/env python3
"""Sweep the four preset scenarios and tabulate the match-rate and
prediction-error gaps.  Reduced scale by default; pass the full sizes
explicitly when you have the hours to spend."""
import argparse
import json
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from run_comparison import main as run_one

PRESETS = ("HSHF", "HSLF", "LSHF", "LSLF")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=500)
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--iterations", type=int, default=800)
    ap.add_argument("--burnin", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="all_presets_out")
    args = ap.parse_args(argv)

    for preset in PRESETS:
        rc = run_one(["--preset", preset,
                      "--pairs", str(args.pairs),
                      "--reps", str(args.reps),
                      "--iterations", str(args.iterations),
                      "--burnin", str(args.burnin),
                      "--seed", str(args.seed),
                      "--out", os.path.join(args.out, preset)])
        if rc != 0:
            return rc

    print(f"\n{'scenario':<10} {'dPMR (pts)':>12} {'dRMSE':>10}")
    for preset in PRESETS:
        path = os.path.join(args.out, preset, "cmp", "comparison.json")
        with open(path, encoding="utf-8") as fh:
            t = json.load(fh)
        dpmr = t.get("dpmr", {}).get("mean", float("nan"))
        drmse = t.get("drmse", {}).get("mean", float("nan"))
        print(f"{preset:<10} {dpmr:>12.2f} {drmse:>10.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
