"""Full-stack checks with independent oracles.

Each test prints one `[ n/11]` line carrying the measured quantity and
its limit before asserting, so a full run leaves a readable scorecard.
The slow entries also pin a wall-clock budget: a regression in the
samplers' inner loops fails here even if the answers stay right.
"""
import math
import os
import time
from itertools import permutations

import numpy as np
import pytest
from scipy import stats

from blase.chain import (MODEL_BLASE, MODEL_GAZM, ChainConfig,
                         assign_labels_from_pools, run_chain, theta_labels)
from blase.cli import main
from blase.design import DesignCache, parse_design
from blase.error_model import GAMMA_PRESETS, GammaParams, sample_gamma
from blase.latent_class import DpHyper, Psi, gibbs_sweep, init_psi_from_prior
from blase.link_sampler import exact_step, sample_all_permutations, switch_step
from blase.metrics import compute_pmr
from blase.pool_moves import MoveConfig, sweep_pool_moves
from blase.pools import LinkState, Pool, balance_pool
from blase.regression import Theta, ThetaView, impute_pool_dummies
from blase.schema import ROLE_BV, ROLE_MV, Field, InCommonSchema, RecordTable
from blase.simulate import (PRESET_LEVELS, ScenarioConfig, generate_dataset,
                            hsb_design, scenario_preset)


def _line(idx, ok, msg):
    print(f"[{idx:2d}/11] {'ok  ' if ok else 'FAIL'} {msg}", flush=True)


def _enumerated_perm_probs(pool, view, y1_all, y2_all):
    """Per-permutation probabilities from the complete joint pair
    densities, via scipy rather than the sampler's score path."""
    a, m = view.a_m(pool.key)
    y1s = pool.y1_slots(y1_all)
    y2s = pool.y2_slots(y2_all)
    logw = {}
    for perm in permutations(range(pool.c)):
        t = 0.0
        for sa, sp in enumerate(perm):
            t += stats.norm.logpdf(y1s[sa], a + view.b_y2 * y2s[sp],
                                   math.sqrt(view.s1))
            t += stats.norm.logpdf(y2s[sp], m, math.sqrt(view.s2))
        logw[perm] = t
    mx = max(logw.values())
    w = {k: math.exp(v - mx) for k, v in logw.items()}
    z = sum(w.values())
    return {k: v / z for k, v in w.items()}


def _tv(emp, oracle):
    return 0.5 * sum(abs(emp.get(k, 0.0) - oracle[k]) for k in oracle)


# ---------------------------------------------------------------------------
# 1. micro instance: two free records per file, full sampler vs enumeration

def _micro_instance():
    """Four records per file.  Rows 0/1 are a known pair at each of two
    keys, rows 2/3 of file 1 sit at a key no free file-2 row can reach,
    and rows 2/3 of file 2 carry the only unknown codes.  The posterior
    then lives on the four joint values of those two codes."""
    schema = InCommonSchema((Field("bv1", 2, ROLE_BV),
                             Field("bv2", 2, ROLE_BV),
                             Field("mv", 2, ROLE_MV)))
    f1 = RecordTable(schema,
                     np.array([[1, 1, 1], [1, 1, 2], [2, 2, 1], [2, 2, 2]]),
                     np.array([0.3, 1.4, 0.5, -0.7]),
                     np.ones((4, 3), dtype=bool),
                     np.array([0, 1, -1, -1]), np.zeros(4, dtype=bool))
    seed2 = np.ones((4, 3), dtype=bool)
    seed2[2, 2] = False
    seed2[3, 2] = False
    f2 = RecordTable(schema,
                     np.array([[1, 1, 1], [1, 1, 2], [1, 1, 1], [1, 1, 2]]),
                     np.array([-0.2, 0.8, 0.9, 0.5]),
                     seed2, np.array([0, 1, -1, -1]), np.zeros(4, dtype=bool))
    design = parse_design(["intercept", "y2", "mv=2"], ["intercept", "mv=2"],
                          schema)
    theta = Theta(np.array([0.0, 0.4, 1.0]), 1.0, np.array([0.0, 1.5]), 1.0)
    view = ThetaView(theta, DesignCache(schema, design))
    phi = np.zeros((3, 3, 2))
    phi[:, 0] = [[.6, .4], [.5, .5], [.4, .6]]
    phi[:, 1] = [[.55, .45], [.5, .5], [.45, .55]]
    phi[:, 2] = [[.7, .3], [.4, .6], [.2, .8]]
    psi = Psi(phi, np.array([.5, .6, 1.0]), np.array([.5, .3, .2]), 1.0)
    return schema, f1, f2, view, psi, {2: 0.35}


def _micro_oracle(psi, gamma):
    """Exact joint law of the two free codes.  Known pairs and the
    unreachable file-1 rows only contribute constants; dummies integrate
    out; the equal-likelihood pairings cancel the permutation prior."""
    pi, phi = psi.pi, psi.phi

    def mix(key):
        return float(sum(pi[h] * phi[h, 0, key[0] - 1] * phi[h, 1, key[1] - 1]
                         * phi[h, 2, key[2] - 1] for h in range(3)))

    def w(m_a, m_b):
        e_a, e_b = int(m_a != 1), int(m_b != 2)
        out = gamma ** e_a * (1 - gamma) ** (1 - e_a)
        out *= gamma ** e_b * (1 - gamma) ** (1 - e_b)
        out *= mix((1, 1, m_a)) * mix((1, 1, m_b))
        out *= stats.norm.pdf(0.9, 1.5 * (m_a == 2), 1.0)
        out *= stats.norm.pdf(0.5, 1.5 * (m_b == 2), 1.0)
        return out

    raw = {(a, b): w(a, b) for a in (1, 2) for b in (1, 2)}
    z = sum(raw.values())
    return {k: v / z for k, v in raw.items()}


def test_micro_posterior_matches_enumeration():
    schema, f1, f2, view, psi, gammas = _micro_instance()
    oracle = _micro_oracle(psi, gammas[2])
    rng = np.random.default_rng(2024)
    state = LinkState(schema, f1, f2)
    for pool in state.sorted_pools():
        impute_pool_dummies(pool, view, f1.y, f2.y, rng, only_missing=True)
    assign_labels_from_pools(state, psi, rng)
    cfg = MoveConfig()
    iters, burn = 200_000, 2_000
    tally = {k: 0 for k in oracle}
    t0 = time.time()
    for t in range(iters):
        sweep_pool_moves(state, view, psi, gammas, rng, cfg)
        sample_all_permutations(state, view, rng, 5, 30)
        for pool in state.sorted_pools():
            impute_pool_dummies(pool, view, f1.y, f2.y, rng)
        assign_labels_from_pools(state, psi, rng)
        if t >= burn:
            tally[(int(state.B2[2, 2]), int(state.B2[3, 2]))] += 1
    elapsed = time.time() - t0
    kept = iters - burn
    tv = _tv({k: v / kept for k, v in tally.items()}, oracle)
    ok = tv <= 0.05 and elapsed <= 300
    _line(1, ok, f"micro posterior TV={tv:.4f} (limit 0.05) in {elapsed:.0f}s "
          f"(limit 300s)")
    assert tv <= 0.05
    assert elapsed <= 300


# ---------------------------------------------------------------------------
# 2. exact permutation draw vs enumeration at pool size three

def _ab_view():
    schema = InCommonSchema((Field("a", 2, ROLE_BV), Field("b", 3, ROLE_MV)))
    design = parse_design(["intercept", "y2", "b=2"], ["intercept", "b=2"],
                          schema)
    theta = Theta(np.array([0.5, 0.3, 1.0]), 1.0, np.array([-0.2, 0.8]), 1.5)
    return ThetaView(theta, DesignCache(schema, design))


def test_exact_permutation_step_matches_enumeration():
    view = _ab_view()
    pool = Pool((1, 2), f1_rows=[0, 1], f2_rows=[0, 1, 2])
    balance_pool(pool)
    pool.f1_dummy_y[:] = [0.25]
    y1 = np.array([0.6, -1.3])
    y2 = np.array([1.1, -0.2, 0.5])
    oracle = _enumerated_perm_probs(pool, view, y1, y2)
    rng = np.random.default_rng(4242)
    n = 100_000
    counts = {p: 0 for p in oracle}
    t0 = time.time()
    for _ in range(n):
        perm, _ = exact_step(pool, view, y1, y2, rng)
        counts[tuple(perm)] += 1
    elapsed = time.time() - t0
    tv = _tv({k: v / n for k, v in counts.items()}, oracle)
    ok = tv <= 0.01 and elapsed <= 60
    _line(2, ok, f"exact step TV={tv:.4f} (limit 0.01) in {elapsed:.0f}s "
          f"(limit 60s)")
    assert tv <= 0.01
    assert elapsed <= 60


# ---------------------------------------------------------------------------
# 3. swap walk vs enumeration at pool size four

def test_switch_walk_matches_enumeration():
    view = _ab_view()
    pool = Pool((2, 1), f1_rows=[0, 1, 2], f2_rows=[0, 1, 2, 3])
    balance_pool(pool)
    pool.f1_dummy_y[:] = [-0.8]
    y1 = np.array([0.2, 1.7, -0.9])
    y2 = np.array([1.4, -0.6, 0.3, 0.9])
    oracle = _enumerated_perm_probs(pool, view, y1, y2)
    rng = np.random.default_rng(777)
    n = 60_000
    counts = {p: 0 for p in oracle}
    t0 = time.time()
    for _ in range(n):
        switch_step(pool, view, y1, y2, rng, 30)
        counts[tuple(pool.perm)] += 1
    elapsed = time.time() - t0
    tv = _tv({k: v / n for k, v in counts.items()}, oracle)
    ok = tv <= 0.02 and elapsed <= 120
    _line(3, ok, f"swap walk TV={tv:.4f} (limit 0.02) in {elapsed:.0f}s "
          f"(limit 120s)")
    assert tv <= 0.02
    assert elapsed <= 120


# ---------------------------------------------------------------------------
# 4. error-rate conjugacy and the concentration conditional

def test_error_rate_beta_and_concentration_moment():
    # the error-rate draw must be the conjugate Beta exactly: replaying
    # an identical generator against a direct beta call has to agree
    prior = GammaParams(3.0, 7.0)
    twin_a, twin_b = np.random.default_rng(5), np.random.default_rng(5)
    for t in range(50):
        e = (np.random.default_rng(1_000 + t).random(40) < 0.3).astype(int)
        got = sample_gamma(prior, e, twin_a)
        want = twin_b.beta(prior.a + e.sum(), prior.b + (1 - e).sum())
        assert got == want

    # alpha times its own gamma rate is a pivot with a known mean,
    # whatever the data; 1e5 sweeps give a tight moment check
    schema = InCommonSchema((Field("b", 4, ROLE_BV),))
    keys = np.array([[1], [2], [3], [4]])
    counts = np.array([40, 25, 20, 15])
    hyper = DpHyper(H=6, a_alpha=0.25, b_alpha=0.25, dirichlet_a=1.0)
    rng = np.random.default_rng(77)
    psi = init_psi_from_prior(hyper, schema, rng)
    n = 100_000
    total = 0.0
    for _ in range(n):
        psi, _ = gibbs_sweep(psi, keys, counts, hyper, schema, rng)
        rate = hyper.b_alpha - math.log(max(psi.pi[-1], 1e-300))
        total += psi.alpha * rate
    shape = hyper.a_alpha + hyper.H - 1
    z = abs(total / n - shape) / (math.sqrt(shape) / math.sqrt(n))
    ok = z < 3.0
    _line(4, ok, f"error-rate draw exact; concentration pivot |z|={z:.2f} "
          f"(limit 3)")
    assert z < 3.0


# ---------------------------------------------------------------------------
# 5. regression step alone, on perfectly linked files

def test_regression_matches_least_squares_when_perfectly_linked():
    sc = ScenarioConfig(name="PERFECT", n_pairs=2_000, fault_level=0.0,
                        seed_level=1.0, seed=31)
    data = generate_dataset(sc)
    design = hsb_design()
    cfg = ChainConfig(model=MODEL_GAZM, iterations=1_500, burnin=300,
                      thin=1, seed=8)
    t0 = time.time()
    store, _ = run_chain(data.schema, data.f1, data.f2, design, cfg)
    elapsed = time.time() - t0
    draws = store.theta_matrix()
    jp = data.schema.index_of("prog")
    prog = data.true_b2[data.truth_map, jp]
    y2 = data.f2.y[data.truth_map]
    X = np.column_stack([np.ones(sc.n_pairs), y2, prog == 2, prog == 3])
    bhat, *_ = np.linalg.lstsq(X, data.f1.y, rcond=None)
    zs = [abs(draws[:, i].mean() - bhat[i]) / draws[:, i].std(ddof=1)
          for i in range(4)]
    ok = max(zs) < 2.0 and elapsed <= 120
    _line(5, ok, f"perfect-link regression max|z|={max(zs):.2f} (limit 2) "
          f"in {elapsed:.0f}s (limit 120s)")
    assert max(zs) < 2.0
    assert elapsed <= 120


# ---------------------------------------------------------------------------
# 6. mixture sweep separates two planted classes

def test_mixture_recovers_two_planted_classes():
    schema = InCommonSchema(tuple(Field(f"b{j}", 3, ROLE_BV)
                                  for j in range(3)))
    rng = np.random.default_rng(11)
    n = 2_000
    p_a, p_b = np.array([.9, .05, .05]), np.array([.05, .05, .9])
    truth = np.zeros(n, dtype=int)
    truth[1_000:] = 1
    recs = np.empty((n, 3), dtype=np.int64)
    for i in range(n):
        recs[i] = 1 + rng.choice(3, size=3, p=p_a if truth[i] == 0 else p_b)
    keys, inverse, counts = np.unique(recs, axis=0, return_inverse=True,
                                      return_counts=True)
    key_rows = [np.nonzero(inverse == k)[0] for k in range(len(keys))]
    hyper = DpHyper(H=10)
    psi = init_psi_from_prior(hyper, schema, rng)
    same = np.zeros((n, n), dtype=np.int32)
    kept = 0
    t0 = time.time()
    for s in range(300):
        psi, labels = gibbs_sweep(psi, keys, counts, hyper, schema, rng)
        if s >= 150:
            rec_label = np.empty(n, dtype=np.int64)
            for k, rows in enumerate(key_rows):
                rec_label[rows] = labels[k]
            same += rec_label[:, None] == rec_label[None, :]
            kept += 1
    elapsed = time.time() - t0
    pred = (same / kept) > 0.5
    truth_same = truth[:, None] == truth[None, :]
    off = ~np.eye(n, dtype=bool)
    acc = float((pred[off] == truth_same[off]).mean())
    ok = acc > 0.9 and elapsed <= 180
    _line(6, ok, f"co-clustering accuracy={acc:.4f} (limit >0.9) in "
          f"{elapsed:.0f}s (limit 180s)")
    assert acc > 0.9
    assert elapsed <= 180


# ---------------------------------------------------------------------------
# 7. the headline comparison: faulty codes, seeded pairs, ten replications

def test_match_rate_advantage_over_replications():
    design = hsb_design()
    diffs = []
    t0 = time.time()
    for rep in range(10):
        sc = scenario_preset("HSHF", n_pairs=1_000, seed=rep)
        data = generate_dataset(sc)
        gp = {j: sc.gamma_params() for j in data.schema.mv_indices}
        base = dict(iterations=2_000, burnin=500, thin=1, seed=1_000 + rep)
        sb, _ = run_chain(data.schema, data.f1, data.f2, design,
                          ChainConfig(model=MODEL_BLASE, **base), gp,
                          truth_map=data.truth_map)
        sg, _ = run_chain(data.schema, data.f1, data.f2, design,
                          ChainConfig(model=MODEL_GAZM, **base),
                          truth_map=data.truth_map)
        d = 100.0 * (compute_pmr(sb.pmr) - compute_pmr(sg.pmr))
        diffs.append(d)
        print(f"        rep {rep}: dPMR={d:+.1f}", flush=True)
    elapsed = time.time() - t0
    wins = sum(d > 0 for d in diffs)
    mean = float(np.mean(diffs))
    ok = wins >= 8 and mean > 0 and elapsed <= 1_800
    _line(7, ok, f"dPMR>0 in {wins}/10 reps (need 8), mean={mean:+.1f} "
          f"points, in {elapsed:.0f}s (limit 1800s)")
    assert wins >= 8
    assert mean > 0
    assert elapsed <= 1_800


# ---------------------------------------------------------------------------
# 8. with every field blocking, both models must produce identical draws

def test_models_coincide_when_every_field_blocks():
    sc = ScenarioConfig(name="ALLBV", n_pairs=400, fault_level=0.0,
                        seed_level=0.2, seed=13)
    data = generate_dataset(sc)
    bv_schema = InCommonSchema(tuple(Field(f.name, f.cardinality, ROLE_BV)
                                     for f in data.schema.fields))

    def rebuild(t):
        return RecordTable(bv_schema, t.reported.copy(), t.y.copy(),
                           np.ones((t.n, bv_schema.J), dtype=bool),
                           t.t1_partner.copy(), t.t2_seed.copy())

    f1, f2 = rebuild(data.f1), rebuild(data.f2)
    design = hsb_design()
    base = dict(iterations=60, burnin=20, thin=2, seed=99)
    sb, _ = run_chain(bv_schema, f1, f2, design,
                      ChainConfig(model=MODEL_BLASE, **base),
                      truth_map=data.truth_map)
    sg, _ = run_chain(bv_schema, f1, f2, design,
                      ChainConfig(model=MODEL_GAZM, **base),
                      truth_map=data.truth_map)
    same_theta = np.array_equal(sb.theta_matrix(), sg.theta_matrix())
    same_pmr = sb.pmr == sg.pmr
    ok = same_theta and same_pmr
    _line(8, ok, f"all-blocking coincidence: theta equal={same_theta}, "
          f"match rates equal={same_pmr}")
    assert same_theta
    assert same_pmr


# ---------------------------------------------------------------------------
# 9. generator fidelity at n=5000

def test_generator_matches_population_targets():
    sc = scenario_preset("HSHF", n_pairs=5_000, seed=0)
    data = generate_dataset(sc)
    fem = float((data.true_b2[:, 0] == 2).mean())
    jp = data.schema.index_of("prog")
    prog = data.true_b2[data.truth_map, jp]
    y2 = data.f2.y[data.truth_map]
    X = np.column_stack([np.ones(sc.n_pairs), y2, prog == 2, prog == 3])
    coef, *_ = np.linalg.lstsq(X, data.f1.y, rcond=None)
    resid_sd = float((data.f1.y - X @ coef).std(ddof=4))
    target = np.array([17.1, 0.65, 2.02, -1.20])
    nonseed = data.f2.t1_partner < 0
    _, counts = np.unique(data.true_b2[nonseed], axis=0, return_counts=True)
    max_pool = int(counts.max())
    ok = (abs(fem - 0.545) <= 0.02
          and np.all(np.abs(coef - target) <= 0.5)
          and abs(resid_sd - 6.25) <= 0.15
          and max_pool <= 10)
    _line(9, ok, f"generator: female={fem:.3f} (0.545±0.02), "
          f"max|coef err|={np.abs(coef - target).max():.3f} (limit 0.5), "
          f"resid sd={resid_sd:.3f} (6.25±0.15), largest pool={max_pool} "
          f"(cap 10)")
    assert abs(fem - 0.545) <= 0.02
    assert np.all(np.abs(coef - target) <= 0.5)
    assert abs(resid_sd - 6.25) <= 0.15
    assert max_pool <= 10


# ---------------------------------------------------------------------------
# 10. the preset tables are pinned exactly

def test_preset_levels_and_priors_are_pinned():
    assert PRESET_LEVELS == {"HSHF": (0.40, 0.60), "HSLF": (0.05, 0.60),
                             "LSHF": (0.40, 0.20), "LSLF": (0.05, 0.20)}
    nonseed = {"HSHF": 1.0, "HSLF": 0.125, "LSHF": 0.5, "LSLF": 0.0625}
    for name, want in nonseed.items():
        assert scenario_preset(name).nonseed_fault_level == pytest.approx(want)
    assert GAMMA_PRESETS == {
        ("HSHF", "CA"): GammaParams(90_000.0, 10_000.0),
        ("HSHF", "D"): GammaParams(2.0, 10.0),
        ("HSHF", "CP"): GammaParams(12_500.0, 87_500.0),
        ("HSLF", "CA"): GammaParams(12_500.0, 87_500.0),
        ("HSLF", "D"): GammaParams(2.0, 10.0),
        ("HSLF", "CP"): GammaParams(90_000.0, 10_000.0),
        ("LSHF", "CA"): GammaParams(50_000.0, 50_000.0),
        ("LSHF", "D"): GammaParams(2.0, 10.0),
        ("LSHF", "CP"): GammaParams(6_250.0, 93_750.0),
        ("LSLF", "CA"): GammaParams(6_250.0, 93_750.0),
        ("LSLF", "D"): GammaParams(2.0, 10.0),
        ("LSLF", "CP"): GammaParams(50_000.0, 50_000.0),
    }
    _line(10, True, "preset fault/seed levels and error-rate priors pinned")


# ---------------------------------------------------------------------------
# 11. the command-line pipeline is byte-for-byte reproducible

_PIPE_CFG = """
scenario.name = LSLF
scenario.n_pairs = 60
scenario.test_size = 40
chain.iterations = 30
chain.burnin = 10
chain.thin = 2
prior.dp_classes = 5
"""


def _run_pipeline(root):
    cfg = os.path.join(root, "run.cfg")
    with open(cfg, "w", encoding="utf-8") as fh:
        fh.write(_PIPE_CFG)
    data = os.path.join(root, "data")
    dirs = {m: os.path.join(root, m) for m in ("blase", "gazm", "pb")}
    assert main(["generate", "--config", cfg, "--out", data,
                 "--seed", "7"]) == 0
    for model, key, extra in [("blase", "blase", []), ("gazm", "gazm", []),
                              ("gazm", "pb", ["--pb"])]:
        assert main(["run", "--config", cfg, "--data", data,
                     "--out", dirs[key], "--model", model, "--seed", "7"]
                    + extra) == 0
    assert main(["metrics", "--config", cfg, "--out",
                 os.path.join(root, "cmp"),
                 dirs["blase"], dirs["gazm"], dirs["pb"]]) == 0


def _tree_bytes(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for name in files:
            path = os.path.join(dirpath, name)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = fh.read()
    return out


def test_pipeline_is_byte_identical_across_executions(tmp_path):
    a, b = str(tmp_path / "first"), str(tmp_path / "second")
    os.makedirs(a)
    os.makedirs(b)
    _run_pipeline(a)
    _run_pipeline(b)
    ta, tb = _tree_bytes(a), _tree_bytes(b)
    same_names = set(ta) == set(tb)
    diff = [k for k in ta if same_names and ta[k] != tb[k]]
    ok = same_names and not diff
    _line(11, ok, f"pipeline reproducibility: {len(ta)} files, "
          f"{'all byte-identical' if ok else f'differences in {diff}'}")
    assert same_names
    assert not diff
