#!/usr/bin/env python3
"""Generate one scenario, fit both models plus the perfectly blocked
baseline on every replication, and print the comparison table.

Defaults finish in roughly a quarter hour on one core.  The full
protocol (5000 pairs, 100 replications, 10000 sweeps) uses the same
flags, just larger; see README.md before committing to it.
"""
import argparse
import os
import sys

from blase.cli import main as blase

CFG = """\
scenario.name = {preset}
scenario.n_pairs = {pairs}
scenario.reps = {reps}
chain.iterations = {iterations}
chain.burnin = {burnin}
"""


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="HSHF",
                    choices=("HSHF", "HSLF", "LSHF", "LSLF"))
    ap.add_argument("--pairs", type=int, default=1000)
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--burnin", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="comparison_out")
    args = ap.parse_args(argv)

    os.makedirs(args.out, exist_ok=True)
    cfg = os.path.join(args.out, "run.cfg")
    with open(cfg, "w", encoding="utf-8") as fh:
        fh.write(CFG.format(preset=args.preset, pairs=args.pairs,
                            reps=args.reps, iterations=args.iterations,
                            burnin=args.burnin))
    data = os.path.join(args.out, "data")
    runs = {m: os.path.join(args.out, m) for m in ("blase", "gazm", "pb")}
    seed = str(args.seed)

    steps = [["generate", "--config", cfg, "--out", data, "--seed", seed]]
    for model, key, extra in [("blase", "blase", []), ("gazm", "gazm", []),
                              ("gazm", "pb", ["--pb"])]:
        steps.append(["run", "--config", cfg, "--data", data,
                      "--out", runs[key], "--model", model, "--seed", seed]
                     + extra)
    steps.append(["metrics", "--config", cfg,
                  "--out", os.path.join(args.out, "cmp"),
                  runs["blase"], runs["gazm"], runs["pb"]])
    steps.append(["report", os.path.join(args.out, "cmp")])

    for step in steps:
        print("+ blase " + " ".join(step), flush=True)
        rc = blase(step)
        if rc != 0:
            return rc
    return 0


if __name__ == "__main__":
    sys.exit(main())
