"""Chain orchestration for both samplers.

The full sampler iterates six steps: (1) error-flag/value/pool moves for
file-2 records, (2) within-pool permutations, (3) imputation of outcomes
on dummy slots, (4) regression parameters, (5) per-field error rates,
(6) the latent-class block sweep.  The blocked baseline pins file-2
values at their reported ones and runs only (2)-(4).

Each iteration spawns one child RNG stream per step, in both samplers,
so on data with no free matching variables the two samplers consume
identical randomness in (2)-(4) and their stored draws coincide exactly.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .design import DesignCache, DesignSpec
from .error_model import GammaParams, sample_gamma
from .latent_class import (DpHyper, Psi, draw_labels, gibbs_sweep,
                           init_psi_from_prior, occupied_classes)
from .link_sampler import sample_all_permutations
from .pool_moves import MoveConfig, SweepStats, sweep_pool_moves
from .pools import LinkState
from .regression import (SingularDesignError, Theta, ThetaView,
                         draw_theta_from_complete, impute_pool_dummies,
                         sample_theta)
from .schema import InCommonSchema, RecordTable

log = logging.getLogger("blase")

MODEL_BLASE = "blase"
MODEL_GAZM = "gazm"


@dataclass(frozen=True)
class ChainConfig:
    model: str = MODEL_BLASE
    iterations: int = 10000
    burnin: int = 500
    thin: int = 2
    seed: int = 0
    switch_threshold: int = 5
    switch_repeats: int = 30
    restrict_to_f1_keys: bool = True
    store_snapshots: bool = False

    def __post_init__(self):
        if self.model not in (MODEL_BLASE, MODEL_GAZM):
            raise ValueError(f"unknown model {self.model!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0 <= self.burnin < self.iterations:
            raise ValueError("burn-in must be shorter than the run")
        if self.thin < 1:
            raise ValueError("thinning interval must be >= 1")
        if self.switch_threshold < 2:
            raise ValueError("switch threshold must be >= 2")
        if self.switch_repeats < 1:
            raise ValueError("switch repeats must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    @property
    def n_stored(self) -> int:
        return (self.iterations - self.burnin) // self.thin

    def move_config(self) -> MoveConfig:
        return MoveConfig(self.restrict_to_f1_keys, self.switch_threshold,
                          self.switch_repeats)


class PosteriorStore:
    """Retained draws and run-level tallies."""

    def __init__(self, theta_labels: list[str], gamma_fields: list[str]):
        self.theta_labels = theta_labels
        self.gamma_fields = gamma_fields
        self.theta: list[np.ndarray] = []
        self.gamma: list[list[float]] = []
        self.pmr: list[float] = []
        self.occupied: list[int] = []
        self.snapshots: list = []
        self.move_stats = SweepStats()
        self.switch_accepted = 0
        self.switch_proposed = 0

    def add(self, theta_flat, gammas, pmr, occupied, snapshot=None):
        self.theta.append(np.asarray(theta_flat))
        self.gamma.append(list(gammas))
        if pmr is not None:
            self.pmr.append(pmr)
        if occupied is not None:
            self.occupied.append(occupied)
        if snapshot is not None:
            self.snapshots.append(snapshot)

    def __len__(self):
        return len(self.theta)

    def theta_matrix(self) -> np.ndarray:
        return np.vstack(self.theta)

    def theta_mean(self) -> np.ndarray:
        return self.theta_matrix().mean(axis=0)

    @staticmethod
    def _stats(x: np.ndarray) -> dict:
        return {
            "mean": float(np.mean(x)),
            "sd": float(np.std(x, ddof=1)) if x.size > 1 else 0.0,
            "q025": float(np.quantile(x, 0.025)),
            "q975": float(np.quantile(x, 0.975)),
        }

    def summarize(self) -> dict:
        M = self.theta_matrix()
        out = {
            "draws": len(self.theta),
            "theta": {lbl: self._stats(M[:, c])
                      for c, lbl in enumerate(self.theta_labels)},
        }
        if self.gamma and self.gamma_fields:
            G = np.asarray(self.gamma)
            out["gamma"] = {f: self._stats(G[:, c])
                            for c, f in enumerate(self.gamma_fields)}
        if self.pmr:
            out["pmr"] = self._stats(np.asarray(self.pmr))
        if self.occupied:
            out["occupied_classes"] = self._stats(np.asarray(self.occupied, dtype=float))
        prop = self.move_stats.proposed
        out["acceptance"] = {
            "pool_moves": self.move_stats.accepted / prop if prop else None,
            "pool_move_counts": {
                "proposed": self.move_stats.proposed,
                "accepted": self.move_stats.accepted,
                "rejected": self.move_stats.rejected,
                "aborted": self.move_stats.aborted,
                "noop": self.move_stats.noop,
                "retries": self.move_stats.retries,
            },
            "switch": (self.switch_accepted / self.switch_proposed
                       if self.switch_proposed else None),
        }
        return out


@dataclass
class ChainState:
    link: LinkState
    theta: Theta
    cache: DesignCache
    psi: Psi | None
    gammas: dict[int, float]
    gamma_priors: dict[int, GammaParams]
    hyper: DpHyper
    nonseed_masks: dict[int, np.ndarray]
    last_occupied: int | None = None


def theta_labels(design: DesignSpec) -> list[str]:
    return ([f"y1.{l}" for l in design.y1_labels()] + ["y1.sigma_sq"]
            + [f"y2.{l}" for l in design.y2_labels()] + ["y2.sigma_sq"])


def _moment_theta(design: DesignSpec, y1: np.ndarray, y2: np.ndarray) -> Theta:
    beta = np.zeros(design.p)
    eta = np.zeros(design.q)
    for c, t in enumerate(design.y1_terms):
        if t.kind == "intercept":
            beta[c] = float(np.mean(y1))
    for c, t in enumerate(design.y2_terms):
        if t.kind == "intercept":
            eta[c] = float(np.mean(y2))
    s1 = float(np.var(y1, ddof=1)) if y1.size > 1 else 1.0
    s2 = float(np.var(y2, ddof=1)) if y2.size > 1 else 1.0
    return Theta(beta, max(s1, 1e-6), eta, max(s2, 1e-6))


def draw_initial_theta(f1: RecordTable, f2: RecordTable, cache: DesignCache,
                       rng) -> Theta:
    """Flat-prior draw from the known-pair (T1) complete data.

    Falls back to a moment-matched point (slopes zero, intercepts at the
    outcome means, variances at the outcome variances) when the known
    pairs are too few, or too unvaried, to identify the regressions.
    """
    design = cache.design
    rows = np.nonzero(f1.t1_partner >= 0)[0]
    need = max(design.p, design.q) + 2
    if rows.size < need:
        log.warning("only %d known pairs; initial regression parameters fall "
                    "back to a moment-matched draw", rows.size)
        return _moment_theta(design, f1.y, f2.y)
    X1 = np.empty((rows.size, design.p))
    X2 = np.empty((rows.size, design.q))
    v1 = np.empty(rows.size)
    v2 = np.empty(rows.size)
    for r, i in enumerate(rows):
        key = f1.key(int(i))
        y2 = float(f2.y[f1.t1_partner[i]])
        X1[r] = cache.x1(key, y2)
        X2[r] = cache.x2(key)
        v1[r] = f1.y[i]
        v2[r] = y2
    try:
        return draw_theta_from_complete(cache, X1, v1, X2, v2, rng)
    except SingularDesignError:
        log.warning("known-pair design is singular; initial regression "
                    "parameters fall back to a moment-matched draw")
        return _moment_theta(design, f1.y, f2.y)


def assign_labels_from_pools(state: LinkState, psi: Psi, rng) -> int:
    """Draw a class label for every current individual (pool position)."""
    pools = state.sorted_pools()
    if not pools:
        return 0
    keys = np.array([p.key for p in pools], dtype=np.int64)
    counts = np.array([p.n_total for p in pools], dtype=np.int64)
    labels = draw_labels(psi, keys, counts, rng)
    _write_labels(state, pools, labels)
    return occupied_classes(labels)


def _write_labels(state: LinkState, pools, labels):
    for pool, lab in zip(pools, labels):
        t = 0
        n1, n2 = pool.n1, pool.n2
        for a, p in enumerate(pool.perm):
            h = int(lab[t])
            t += 1
            if a < n1:
                state.z1[pool.f1_rows[a]] = h
            if p < n2:
                state.z2[pool.f2_rows[p]] = h
        for i1, i2 in pool.t1_pairs:
            h = int(lab[t])
            t += 1
            state.z1[i1] = h
            state.z2[i2] = h


def seed_rows_b12(f1: RecordTable, f2: RecordTable):
    """Value rows of the known-pair and known-error-free records."""
    rows = []
    for i in np.nonzero(f1.t1_partner >= 0)[0]:
        rows.append(tuple(int(v) for v in f1.reported[i]))
    for tab in (f1, f2):
        for i in np.nonzero(tab.t2_seed)[0]:
            rows.append(tuple(int(v) for v in tab.reported[i]))
    return rows


def init_chain(schema: InCommonSchema, f1: RecordTable, f2: RecordTable,
               design: DesignSpec, cfg: ChainConfig,
               gamma_priors: dict[int, GammaParams], hyper: DpHyper,
               seed_seq: np.random.SeedSequence) -> ChainState:
    ss_theta, ss_dummy, ss_c0, ss_psi, ss_gamma = seed_seq.spawn(5)
    cache = DesignCache(schema, design)
    theta = draw_initial_theta(f1, f2, cache, np.random.default_rng(ss_theta))
    link = LinkState(schema, f1, f2)
    view = ThetaView(theta, cache)
    rng_d = np.random.default_rng(ss_dummy)
    for pool in link.sorted_pools():
        impute_pool_dummies(pool, view, f1.y, f2.y, rng_d, only_missing=True)
    sample_all_permutations(link, view, np.random.default_rng(ss_c0),
                            cfg.switch_threshold, cfg.switch_repeats)

    psi = None
    gammas: dict[int, float] = {}
    nonseed_masks: dict[int, np.ndarray] = {}
    occupied = None
    if cfg.model == MODEL_BLASE:
        rng_psi = np.random.default_rng(ss_psi)
        psi = init_psi_from_prior(hyper, schema, rng_psi)
        b12 = seed_rows_b12(f1, f2)
        if b12:
            uniq = sorted(set(b12))
            keys = np.array(uniq, dtype=np.int64)
            counts = np.array([sum(1 for r in b12 if r == u) for u in uniq],
                              dtype=np.int64)
            psi, _ = gibbs_sweep(psi, keys, counts, hyper, schema, rng_psi)
        occupied = assign_labels_from_pools(link, psi, rng_psi)
        rng_g = np.random.default_rng(ss_gamma)
        for j in schema.mv_indices:
            prior = gamma_priors[j]
            gammas[j] = float(rng_g.beta(prior.a, prior.b))
            nonseed_masks[j] = ~f2.seed[:, j]
    return ChainState(link, theta, cache, psi, gammas, gamma_priors, hyper,
                      nonseed_masks, occupied)


def blase_iteration(cs: ChainState, cfg: ChainConfig, streams):
    """One sweep of all six steps; streams is the 6-tuple of RNGs."""
    r1, r2, r3, r4, r5, r6 = streams
    link, cache = cs.link, cs.cache
    y1, y2 = link.f1.y, link.f2.y
    view = ThetaView(cs.theta, cache)
    stats = sweep_pool_moves(link, view, cs.psi, cs.gammas, r1,
                             cfg.move_config())
    switch = sample_all_permutations(link, view, r2, cfg.switch_threshold,
                                     cfg.switch_repeats)
    for pool in link.sorted_pools():
        impute_pool_dummies(pool, view, y1, y2, r3)
    cs.theta = sample_theta(cs.theta, cache, link.sorted_pools(), y1, y2, r4)
    for j in link.schema.mv_indices:
        flags = cs.link.E2[cs.nonseed_masks[j], j]
        cs.gammas[j] = sample_gamma(cs.gamma_priors[j], flags, r5)
    pools = link.sorted_pools()
    keys = np.array([p.key for p in pools], dtype=np.int64)
    counts = np.array([p.n_total for p in pools], dtype=np.int64)
    cs.psi, labels = gibbs_sweep(cs.psi, keys, counts, cs.hyper, link.schema, r6)
    _write_labels(link, pools, labels)
    cs.last_occupied = occupied_classes(labels)
    return stats, switch


def gazm_iteration(cs: ChainState, cfg: ChainConfig, streams):
    """Blocked baseline: permutations, imputation, regression only."""
    _, r2, r3, r4, _, _ = streams
    link, cache = cs.link, cs.cache
    y1, y2 = link.f1.y, link.f2.y
    view = ThetaView(cs.theta, cache)
    switch = sample_all_permutations(link, view, r2, cfg.switch_threshold,
                                     cfg.switch_repeats)
    for pool in link.sorted_pools():
        impute_pool_dummies(pool, view, y1, y2, r3)
    cs.theta = sample_theta(cs.theta, cache, link.sorted_pools(), y1, y2, r4)
    return SweepStats(), switch


def run_chain(schema: InCommonSchema, f1: RecordTable, f2: RecordTable,
              design: DesignSpec, cfg: ChainConfig,
              gamma_priors: dict[int, GammaParams] | None = None,
              hyper: DpHyper | None = None,
              truth_map: np.ndarray | None = None,
              trace_cb=None) -> tuple[PosteriorStore, ChainState]:
    """Run one chain and return the retained draws plus the final state.

    truth_map[i] is the file-2 row truly paired with file-1 row i (for
    per-draw match-rate tracking); trace_cb, when given, receives one
    row dict per iteration.
    """
    from .metrics import count_link_matches

    hyper = hyper or DpHyper()
    gamma_priors = gamma_priors or {}
    if cfg.model == MODEL_BLASE:
        missing = [schema.names[j] for j in schema.mv_indices
                   if j not in gamma_priors]
        if missing:
            raise ValueError(f"no error-rate prior for MV fields: {missing}")
    master = np.random.SeedSequence(cfg.seed)
    ss_init, ss_iters = master.spawn(2)
    cs = init_chain(schema, f1, f2, design, cfg, gamma_priors, hyper, ss_init)

    labels = theta_labels(design)
    gfields = [schema.names[j] for j in schema.mv_indices]
    store = PosteriorStore(labels, gfields if cfg.model == MODEL_BLASE else [])
    step = blase_iteration if cfg.model == MODEL_BLASE else gazm_iteration

    for s in range(1, cfg.iterations + 1):
        streams = [np.random.default_rng(c) for c in ss_iters.spawn(6)]
        stats, switch = step(cs, cfg, streams)
        store.move_stats.merge(stats)
        store.switch_accepted += switch[0]
        store.switch_proposed += switch[1]
        stored = s > cfg.burnin and (s - cfg.burnin) % cfg.thin == 0
        pmr = None
        if truth_map is not None:
            good, total = count_link_matches(cs.link, truth_map)
            pmr = good / total if total else float("nan")
        if stored:
            snap = emit_completed(cs.link) if cfg.store_snapshots else None
            store.add(cs.theta.flat(), [cs.gammas[j] for j in schema.mv_indices]
                      if cfg.model == MODEL_BLASE else [],
                      pmr, cs.last_occupied, snap)
        if trace_cb is not None:
            row = {"iteration": s, "stored": int(stored)}
            for lbl, v in zip(labels, cs.theta.flat()):
                row[lbl] = float(v)
            for j in (schema.mv_indices if cfg.model == MODEL_BLASE else []):
                row[f"gamma.{schema.names[j]}"] = cs.gammas[j]
            if pmr is not None:
                row["pmr"] = pmr
            if cs.last_occupied is not None:
                row["occupied_classes"] = cs.last_occupied
            trace_cb(row)
    assert len(store) == cfg.n_stored
    return store, cs


def emit_completed(link: LinkState) -> list[dict]:
    """Completed data at the current state: one row per link position."""
    out = []
    for pool in link.sorted_pools():
        n1, n2 = pool.n1, pool.n2
        y1s = pool.y1_slots(link.f1.y)
        y2s = pool.y2_slots(link.f2.y)
        for a, p in enumerate(pool.perm):
            out.append({
                "f1_row": pool.f1_rows[a] if a < n1 else -1,
                "f2_row": pool.f2_rows[p] if p < n2 else -1,
                "key": pool.key, "y1": y1s[a], "y2": y2s[p],
            })
        for i1, i2 in pool.t1_pairs:
            out.append({"f1_row": i1, "f2_row": i2, "key": pool.key,
                        "y1": float(link.f1.y[i1]), "y2": float(link.f2.y[i2])})
    return out
