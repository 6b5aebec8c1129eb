"""Match-rate and predictive-accuracy metrics, and the method comparison.

Sign conventions throughout: positive entries mean the full sampler beat
the blocked baseline.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .design import DesignCache
from .pools import LinkState
from .regression import Theta
from .simulate import TestSet


def count_link_matches(link: LinkState, truth_map: np.ndarray):
    """(correct, total) over real-to-real links excluding known pairs."""
    correct = 0
    total = 0
    for pool in link.sorted_pools():
        n1, n2 = pool.n1, pool.n2
        for a, p in enumerate(pool.perm):
            if a < n1 and p < n2:
                total += 1
                if truth_map[pool.f1_rows[a]] == pool.f2_rows[p]:
                    correct += 1
    return correct, total


def compute_pmr(per_draw: np.ndarray | list) -> float:
    """Average the per-draw matched fraction over retained draws."""
    arr = np.asarray(per_draw, dtype=float)
    if arr.size == 0:
        return float("nan")
    return float(np.mean(arr))


def compute_rmse(theta_hat: Theta, cache: DesignCache, test: TestSet,
                 rng, predictive: bool = True) -> float:
    """Root mean squared error of file-1 outcome predictions on held-out
    records.  One predictive draw per record by default; predictive=False
    scores the conditional mean instead (diagnostic only)."""
    m = test.y1.shape[0]
    err = np.empty(m)
    sd = float(np.sqrt(theta_hat.sigma1_sq))
    for i in range(m):
        key = tuple(int(v) for v in test.keys[i])
        mean = float(cache.x1(key, float(test.y2[i])) @ theta_hat.beta)
        pred = mean + sd * rng.standard_normal() if predictive else mean
        err[i] = pred - test.y1[i]
    return float(np.sqrt(np.mean(err ** 2)))


@dataclass
class MethodResult:
    """One method's output on one replication."""
    theta: np.ndarray        # flat posterior mean, theta_labels order
    pmr: float
    rmse: float


def _paired(diffs: np.ndarray) -> dict:
    # one-sample t on the paired differences == paired t between methods
    out = {"mean": float(np.mean(diffs))}
    if diffs.size > 1 and np.std(diffs) > 0:
        p = float(stats.ttest_1samp(diffs, 0.0).pvalue)
    else:
        p = float("nan")
    out["p"] = p
    out["significant"] = bool(p < 0.05) if np.isfinite(p) else False
    return out


def compare_methods(res_blase: list[MethodResult], res_gm: list[MethodResult],
                    res_pb: list[MethodResult] | None, theta_true: np.ndarray,
                    labels: list[str]) -> dict:
    """Replication-paired comparison of the full sampler vs the baseline.

    Per coefficient: mean of 100(|gm err| - |blase err|)/truth.  dPMR is in
    percentage points; dRMSE is relative to the perfectly blocked method's
    RMSE (omitted when no perfectly blocked results are given).  Each entry
    carries a paired t-test at the .05 level.
    """
    R = len(res_blase)
    if len(res_gm) != R or (res_pb is not None and len(res_pb) != R) or R == 0:
        raise ValueError("methods must supply the same nonzero number of "
                         "replications")
    theta_true = np.asarray(theta_true, dtype=float)
    table: dict = {"replications": R, "coefficients": {}}
    B = np.vstack([r.theta for r in res_blase])
    G = np.vstack([r.theta for r in res_gm])
    for c, lbl in enumerate(labels):
        t = theta_true[c]
        if t == 0.0:
            continue   # relative error undefined at zero truth
        d = 100.0 * (np.abs(G[:, c] - t) - np.abs(B[:, c] - t)) / t
        table["coefficients"][lbl] = _paired(d)
    pmr_b = np.array([r.pmr for r in res_blase])
    pmr_g = np.array([r.pmr for r in res_gm])
    if np.isfinite(pmr_b).all() and np.isfinite(pmr_g).all():
        table["dpmr"] = _paired(100.0 * (pmr_b - pmr_g))
    if res_pb is not None:
        rmse_b = np.array([r.rmse for r in res_blase])
        rmse_g = np.array([r.rmse for r in res_gm])
        rmse_p = np.array([r.rmse for r in res_pb])
        table["drmse"] = _paired((rmse_g - rmse_b) / rmse_p)
    return table


def comparison_rows(table: dict) -> list[dict]:
    """Flatten a comparison table to CSV-ready rows."""
    rows = []
    for lbl, cell in table["coefficients"].items():
        rows.append({"entry": lbl, **cell})
    for k in ("dpmr", "drmse"):
        if k in table:
            rows.append({"entry": k, **table[k]})
    return rows
