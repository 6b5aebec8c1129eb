"""Command line front end.

Subcommands: generate (write a synthetic two-file dataset), run (one
sampler over a dataset), metrics (compare method runs), report (print a
run or comparison summary).  Exit codes: 0 success, 2 validation error,
3 runtime/numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from .chain import MODEL_BLASE, MODEL_GAZM, run_chain, theta_labels
from .config import ConfigError, RunConfig, load_config
from .design import DesignCache
from .metrics import MethodResult, compare_methods, comparison_rows, compute_rmse
from .regression import DegenerateStateError, SingularDesignError, Theta
from .simulate import (GeneratedData, draw_test_set, generate_dataset,
                       hsb_schema, perfect_f2, read_dataset, true_theta,
                       write_dataset)

# fixed tags for deriving per-purpose seeds from one master seed
_TAG_CHAIN = 1
_TAG_RMSE = 2


def _derive_seed(base: int, tag: int, rep: int) -> int:
    return int(np.random.SeedSequence([base, tag, rep]).generate_state(1)[0])


def _rep_dirs(root: str) -> list[tuple[int, str]]:
    """(rep index, dataset dir) pairs for a generate output tree."""
    if os.path.exists(os.path.join(root, "F1.csv")):
        return [(0, root)]
    reps = sorted(d for d in os.listdir(root)
                  if d.startswith("rep") and
                  os.path.exists(os.path.join(root, d, "F1.csv")))
    if not reps:
        raise ConfigError(f"no dataset found under {root!r}")
    return [(int(d[3:]), os.path.join(root, d)) for d in reps]


def cmd_generate(cfg: RunConfig) -> int:
    sc = cfg.scenario
    if sc.reps == 1:
        write_dataset(generate_dataset(sc), cfg.out_dir)
        return 0
    for r in range(sc.reps):
        rep_sc = replace(sc, seed=_derive_seed(sc.seed, 0, r), reps=1)
        write_dataset(generate_dataset(rep_sc),
                      os.path.join(cfg.out_dir, f"rep{r:03d}"))
    return 0


def _write_run(cfg: RunConfig, data: GeneratedData, outdir: str,
               chain_seed: int, pb: bool) -> None:
    os.makedirs(outdir, exist_ok=True)
    f2 = perfect_f2(data) if pb else data.f2
    chain_cfg = replace(cfg.chain, seed=chain_seed,
                        model=MODEL_GAZM if pb else cfg.chain.model)
    gp = {j: cfg.gamma_params() for j in data.schema.mv_indices}
    labels = theta_labels(cfg.design)
    gcols = [f"gamma.{data.schema.names[j]}" for j in data.schema.mv_indices]
    cols = ["iteration", "stored"] + labels
    if chain_cfg.model == MODEL_BLASE:
        cols += gcols + ["occupied_classes"]
    cols += ["pmr"]

    with open(os.path.join(outdir, "trace.csv"), "w", newline="",
              encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        store, _ = run_chain(data.schema, data.f1, f2, cfg.design, chain_cfg,
                             gp, cfg.hyper, truth_map=data.truth_map,
                             trace_cb=w.writerow)
    summary = {"model": chain_cfg.model, "perfectly_blocked": pb,
               "iterations": chain_cfg.iterations, "burnin": chain_cfg.burnin,
               "thin": chain_cfg.thin, "seed": chain_seed,
               "scenario_seed": data.scenario.seed,
               "theta_labels": labels}
    summary.update(store.summarize())
    with open(os.path.join(outdir, "summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_run(cfg: RunConfig, pb: bool) -> int:
    reps = _rep_dirs(cfg.data_dir)
    multi = len(reps) > 1
    for r, ddir in reps:
        data = read_dataset(ddir)
        outdir = os.path.join(cfg.out_dir, f"rep{r:03d}") if multi else cfg.out_dir
        seed = (_derive_seed(cfg.chain.seed, _TAG_CHAIN, r) if multi
                else cfg.chain.seed)
        _write_run(cfg, data, outdir, seed, pb)
    return 0


def _load_method(root: str, cfg: RunConfig) -> list[MethodResult]:
    """One MethodResult per replication from a run output tree."""
    if os.path.exists(os.path.join(root, "summary.json")):
        dirs = [(0, root)]
    else:
        subs = sorted(d for d in os.listdir(root)
                      if d.startswith("rep") and
                      os.path.exists(os.path.join(root, d, "summary.json")))
        if not subs:
            raise ConfigError(f"no run summaries under {root!r}")
        dirs = [(int(d[3:]), os.path.join(root, d)) for d in subs]
    cache = DesignCache(hsb_schema(), cfg.design)
    out = []
    for r, d in dirs:
        with open(os.path.join(d, "summary.json"), encoding="utf-8") as fh:
            s = json.load(fh)
        labels = s["theta_labels"]
        flat = np.array([s["theta"][l]["mean"] for l in labels])
        pmr = s.get("pmr", {}).get("mean", float("nan"))
        theta_hat = _theta_from_flat(flat, cfg)
        sc = replace(cfg.scenario, seed=s["scenario_seed"])
        test = draw_test_set(sc)
        rng = np.random.default_rng(
            np.random.SeedSequence([sc.seed, _TAG_RMSE]))
        rmse = compute_rmse(theta_hat, cache, test, rng)
        out.append(MethodResult(flat, pmr, rmse))
    return out


def _theta_from_flat(flat: np.ndarray, cfg: RunConfig) -> Theta:
    p, q = cfg.design.p, cfg.design.q
    return Theta(flat[:p], float(flat[p]), flat[p + 1:p + 1 + q],
                 float(flat[p + 1 + q]))


def cmd_metrics(cfg: RunConfig, method_dirs: list[str]) -> int:
    if not method_dirs:
        raise ConfigError("metrics needs at least one run directory")
    results = [_load_method(d, cfg) for d in method_dirs]
    os.makedirs(cfg.out_dir, exist_ok=True)
    if len(results) == 1:
        res = results[0]
        table = {
            "replications": len(res),
            "pmr": float(np.nanmean([m.pmr for m in res])),
            "rmse": float(np.mean([m.rmse for m in res])),
        }
    else:
        pb = results[2] if len(results) >= 3 else None
        table = compare_methods(results[0], results[1], pb,
                                true_theta().flat(), theta_labels(cfg.design))
    with open(os.path.join(cfg.out_dir, "comparison.json"), "w",
              encoding="utf-8") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if "coefficients" in table:
        rows = comparison_rows(table)
        with open(os.path.join(cfg.out_dir, "comparison.csv"), "w",
                  newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=["entry", "mean", "p",
                                               "significant"])
            w.writeheader()
            w.writerows(rows)
    return 0


def cmd_report(paths: list[str]) -> int:
    for path in paths:
        name = path
        if os.path.isdir(path):
            for cand in ("comparison.json", "summary.json"):
                p = os.path.join(path, cand)
                if os.path.exists(p):
                    path = p
                    break
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        print(f"== {name}")
        _print_doc(doc)
    return 0


def _print_doc(doc: dict, indent: str = "  "):
    for k in sorted(doc):
        v = doc[k]
        if isinstance(v, dict):
            if set(v) >= {"mean", "sd"}:
                print(f"{indent}{k}: {v['mean']:.4g} (sd {v['sd']:.3g})")
            elif set(v) >= {"mean", "p"}:
                star = " *" if v.get("significant") else ""
                print(f"{indent}{k}: {v['mean']:.4g} (p={v['p']:.3g}){star}")
            else:
                print(f"{indent}{k}:")
                _print_doc(v, indent + "  ")
        else:
            print(f"{indent}{k}: {v}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="blase",
        description="Bayesian file matching with error-prone categories")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="dotted-key config file")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--reps", type=int, help="replication count override")
        p.add_argument("--preset", choices=["HSHF", "HSLF", "LSHF", "LSLF"],
                       help="scenario preset override")

    g = sub.add_parser("generate", help="write synthetic datasets")
    common(g)

    r = sub.add_parser("run", help="run one sampler over a dataset")
    common(r)
    r.add_argument("--model", choices=[MODEL_BLASE, MODEL_GAZM])
    r.add_argument("--data", help="dataset directory (overrides io.data_dir)")
    r.add_argument("--pb", action="store_true",
                   help="undo reporting faults first (perfectly blocked "
                        "baseline; forces the blocked sampler)")

    m = sub.add_parser("metrics", help="compare method runs")
    common(m)
    m.add_argument("dirs", nargs="+",
                   help="run output dirs: full sampler, baseline, "
                        "perfectly blocked (1 dir = plain report)")

    p = sub.add_parser("report", help="print a summary or comparison")
    p.add_argument("paths", nargs="+", help="run dirs or JSON files")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args.paths)
        cfg = load_config(args.config, preset=args.preset, seed=args.seed,
                          model=getattr(args, "model", None), out=args.out,
                          reps=args.reps)
        if getattr(args, "data", None):
            cfg = replace(cfg, data_dir=args.data)
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "run":
            return cmd_run(cfg, args.pb)
        return cmd_metrics(cfg, args.dirs)
    except (SingularDesignError, DegenerateStateError, ArithmeticError,
            np.linalg.LinAlgError, RuntimeError) as e:
        print(f"failure: {e}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
