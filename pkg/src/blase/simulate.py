"""Synthetic two-file data generator and scenario presets.

Generates perfectly paired school-testing records (file 1 carries a
reading score, file 2 a math score, both carry six categorical codes),
assigns known-pair seeds subject to a pool-size cap, then injects
reporting faults into file 2's program code.  The four named scenarios
cross fault level {.40, .05} with seed level {.60, .20}.

The two outcome regressions use fixed published coefficients.  The
categorical stages in between (school type given campus, program given
school type, and so on) are synthetic stand-in probability tables: the
source models were never published, so downstream checks target
properties of the output (proportions, fitted coefficients, cap
enforcement), not these tables.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .design import DesignSpec, parse_design
from .error_model import GAMMA_PRESETS, GammaParams
from .regression import Theta
from .schema import (ROLE_BV, ROLE_MV, Field, InCommonSchema, RecordTable,
                     read_table, write_table)

PRESET_LEVELS = {
    # name -> (overall fault level, T1-seed level)
    "HSHF": (0.40, 0.60),
    "HSLF": (0.05, 0.60),
    "LSHF": (0.40, 0.20),
    "LSLF": (0.05, 0.20),
}

MECH_UNIFORM = "uniform"
MECH_CONFUSION = "confusion"


def hsb_schema() -> InCommonSchema:
    return InCommonSchema((
        Field("female", 2, ROLE_BV),   # 1 = male, 2 = female
        Field("schtyp", 2, ROLE_BV),   # 1 = public, 2 = private
        Field("ses", 3, ROLE_BV),      # low / middle / high
        Field("prog", 3, ROLE_MV),     # general / academic / vocational
        Field("honors", 2, ROLE_BV),   # 1 = no, 2 = yes
        Field("cid", 30, ROLE_BV),
    ))


def hsb_design() -> DesignSpec:
    return parse_design(
        ["intercept", "y2", "prog=2", "prog=3"],
        ["intercept", "prog=2", "prog=3", "ses=2", "ses=3", "female=2"],
        hsb_schema(),
    )


def true_theta() -> Theta:
    """Generating coefficients, ordered to match hsb_design()."""
    return Theta(
        beta=np.array([17.1, 0.65, 2.02, -1.20]),
        sigma1_sq=6.25 ** 2,
        eta=np.array([47.9, 5.88, -3.84, 2.93, 4.57, -0.20]),
        sigma2_sq=6.37 ** 2,
    )


def _default_schtyp_table() -> np.ndarray:
    # p(private) varies by campus through a fixed formula; any documented
    # table works here, see module docstring.
    p_priv = np.array([0.08 + 0.024 * ((7 * c) % 11) for c in range(1, 31)])
    return np.column_stack([1.0 - p_priv, p_priv])


@dataclass(frozen=True)
class GenerationModel:
    p_female: float = 0.545
    n_campus: int = 30
    # rows index the conditioning level(s), columns the drawn level
    schtyp_given_cid: np.ndarray = field(default_factory=_default_schtyp_table)
    prog_given_schtyp: np.ndarray = field(default_factory=lambda: np.array([
        [0.25, 0.50, 0.25],     # public
        [0.15, 0.70, 0.15],     # private
    ]))
    ses_given_prog_schtyp: np.ndarray = field(default_factory=lambda: np.array([
        [[0.30, 0.50, 0.20], [0.20, 0.45, 0.35]],   # general
        [[0.20, 0.45, 0.35], [0.10, 0.40, 0.50]],   # academic
        [[0.40, 0.45, 0.15], [0.30, 0.50, 0.20]],   # vocational
    ]))
    honors_given_ses_prog: np.ndarray = field(default_factory=lambda: np.array([
        [0.10, 0.25, 0.05],     # low ses; columns are prog
        [0.15, 0.35, 0.08],
        [0.20, 0.50, 0.12],
    ]))
    math_coef: tuple = (47.9, 5.88, -3.84, 2.93, 4.57, -0.20)
    math_sd: float = 6.37
    read_coef: tuple = (17.1, 0.65, 2.02, -1.20)
    read_sd: float = 6.25


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "HSHF"
    n_pairs: int = 5000
    fault_level: float = 0.40
    seed_level: float = 0.60
    gamma_prior: str = "D"
    mechanism: str = MECH_UNIFORM
    confusion: tuple | None = None   # row-stochastic d x d, zero diagonal
    pool_cap: int = 10
    test_size: int = 500
    reps: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_pairs < 1:
            raise ValueError("n_pairs must be positive")
        if not 0.0 <= self.fault_level <= 1.0:
            raise ValueError("fault level must lie in [0, 1]")
        if not 0.0 <= self.seed_level <= 1.0:
            raise ValueError("seed level must lie in [0, 1]")
        if self.seed_level < 1.0:
            if self.fault_level / (1.0 - self.seed_level) > 1.0 + 1e-12:
                raise ValueError("fault level exceeds the non-seed fraction")
        elif self.fault_level > 0.0:
            raise ValueError("cannot fault records when every pair is a seed")
        if self.gamma_prior not in ("D", "CA", "CP"):
            raise ValueError(f"unknown error-rate prior {self.gamma_prior!r}")
        if self.mechanism not in (MECH_UNIFORM, MECH_CONFUSION):
            raise ValueError(f"unknown fault mechanism {self.mechanism!r}")
        if self.mechanism == MECH_CONFUSION:
            if self.confusion is None:
                raise ValueError("confusion mechanism requires a category map")
            _validate_confusion(np.asarray(self.confusion, dtype=float))
        if self.pool_cap < 1:
            raise ValueError("pool cap must be positive")
        if self.test_size < 1:
            raise ValueError("test size must be positive")
        if self.reps < 1:
            raise ValueError("replication count must be positive")

    @property
    def nonseed_fault_level(self) -> float:
        if self.seed_level >= 1.0:
            return 0.0
        return self.fault_level / (1.0 - self.seed_level)

    def gamma_params(self) -> GammaParams:
        key = (self.name, self.gamma_prior)
        if key in GAMMA_PRESETS:
            return GAMMA_PRESETS[key]
        # custom scenarios get the diffuse setting
        return GammaParams(2.0, 10.0)


def scenario_preset(name: str, **overrides) -> ScenarioConfig:
    if name not in PRESET_LEVELS:
        raise ValueError(f"unknown scenario {name!r}; "
                         f"choose from {sorted(PRESET_LEVELS)}")
    fault, seed_lv = PRESET_LEVELS[name]
    return ScenarioConfig(name=name, fault_level=fault, seed_level=seed_lv,
                          **overrides)


def _validate_confusion(m: np.ndarray):
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("confusion map must be square")
    if np.any(np.diag(m) != 0.0):
        raise ValueError("confusion map diagonal must be zero")
    if np.any(m < 0) or not np.allclose(m.sum(axis=1), 1.0):
        raise ValueError("confusion map rows must be distributions")


def _draw_levels(prob_rows: np.ndarray, rng) -> np.ndarray:
    """One categorical draw per row; levels are 1-based."""
    u = rng.random(prob_rows.shape[0])
    cum = np.cumsum(prob_rows, axis=1)
    idx = (u[:, None] > cum).sum(axis=1)
    return 1 + np.minimum(idx, prob_rows.shape[1] - 1)


def draw_population(model: GenerationModel, n: int, rng):
    """True codes plus both outcomes for n pairs.

    Returns (B, read, math): B is (n, 6) in schema column order.
    """
    cid = rng.integers(1, model.n_campus + 1, size=n)
    female = 1 + (rng.random(n) < model.p_female).astype(np.int64)
    schtyp = _draw_levels(model.schtyp_given_cid[cid - 1], rng)
    prog = _draw_levels(model.prog_given_schtyp[schtyp - 1], rng)
    ses = _draw_levels(model.ses_given_prog_schtyp[prog - 1, schtyp - 1], rng)
    p_hon = model.honors_given_ses_prog[ses - 1, prog - 1]
    honors = 1 + (rng.random(n) < p_hon).astype(np.int64)

    c = model.math_coef
    math = (c[0] + c[1] * (prog == 2) + c[2] * (prog == 3)
            + c[3] * (ses == 2) + c[4] * (ses == 3) + c[5] * (female == 2)
            + rng.normal(0.0, model.math_sd, n))
    r = model.read_coef
    read = (r[0] + r[1] * math + r[2] * (prog == 2) + r[3] * (prog == 3)
            + rng.normal(0.0, model.read_sd, n))
    B = np.column_stack([female, schtyp, ses, prog, honors, cid])
    return B.astype(np.int64), read, math


def assign_seeds_and_cap(B: np.ndarray, cfg: ScenarioConfig, rng) -> np.ndarray:
    """Known-pair flags: forced picks bring every pool under the cap,
    then uniform picks reach the target level.  Pool size counts non-seed
    members only, so turning a pair into a seed shrinks its pool."""
    n = B.shape[0]
    groups: dict[tuple, list[int]] = {}
    for i in range(n):
        groups.setdefault(tuple(B[i]), []).append(i)
    t1 = np.zeros(n, dtype=bool)
    forced = 0
    for rows in groups.values():
        excess = len(rows) - cfg.pool_cap
        if excess > 0:
            pick = rng.choice(len(rows), size=excess, replace=False)
            for t in pick:
                t1[rows[t]] = True
            forced += excess
    target = int(round(cfg.seed_level * n))
    if target < forced:
        raise ValueError(
            f"seed level {cfg.seed_level} asks for {target} known pairs but "
            f"the pool cap already forces {forced}")
    free = np.nonzero(~t1)[0]
    extra = target - forced
    if extra > 0:
        t1[rng.choice(free, size=extra, replace=False)] = True
    return t1


def inject_faults(true_vals: np.ndarray, eligible: np.ndarray, rate: float,
                  d: int, mechanism: str, confusion, rng):
    """Faulty reported values for one field.

    Picks round(rate * n) records from the eligible set and replaces their
    reported value: uniformly over the d-1 wrong levels, or by a draw from
    the record's confusion-map row.  Returns (reported, fault_mask).
    """
    n = true_vals.shape[0]
    reported = true_vals.copy()
    n_fault = int(round(rate * n))
    pool = np.nonzero(eligible)[0]
    if n_fault > pool.size:
        raise ValueError(f"{n_fault} faults requested but only "
                         f"{pool.size} records are eligible")
    mask = np.zeros(n, dtype=bool)
    if n_fault == 0:
        return reported, mask
    hit = rng.choice(pool, size=n_fault, replace=False)
    mask[hit] = True
    if mechanism == MECH_UNIFORM:
        for i in hit:
            v = true_vals[i]
            alt = rng.integers(1, d)      # uniform over d-1 wrong values
            reported[i] = alt if alt < v else alt + 1
    else:
        m = np.asarray(confusion, dtype=float)
        _validate_confusion(m)
        if m.shape[0] != d:
            raise ValueError("confusion map size does not match the field")
        for i in hit:
            reported[i] = _draw_levels(m[None, true_vals[i] - 1], rng)[0]
    return reported, mask


@dataclass
class GeneratedData:
    scenario: ScenarioConfig
    schema: InCommonSchema
    f1: RecordTable
    f2: RecordTable
    truth_map: np.ndarray      # file-1 row -> true file-2 row
    true_b2: np.ndarray        # (n, J) true codes in file-2 row order


def generate_dataset(cfg: ScenarioConfig,
                     model: GenerationModel | None = None) -> GeneratedData:
    """Build one replication: generate, seed-and-cap, fault, shuffle."""
    model = model or GenerationModel()
    schema = hsb_schema()
    ss = np.random.SeedSequence(cfg.seed)
    ss_pop, ss_seed, ss_fault, ss_shuffle, _ = ss.spawn(5)

    n = cfg.n_pairs
    B, read, math = draw_population(model, n, np.random.default_rng(ss_pop))
    t1 = assign_seeds_and_cap(B, cfg, np.random.default_rng(ss_seed))

    j_prog = schema.index_of("prog")
    rep_prog, faulted = inject_faults(
        B[:, j_prog], ~t1, cfg.fault_level, schema.cardinalities[j_prog],
        cfg.mechanism, cfg.confusion, np.random.default_rng(ss_fault))

    perm = np.random.default_rng(ss_shuffle).permutation(n)
    # file-2 row perm[i] holds original pair i
    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n)

    J = schema.J
    rep2 = B.copy()
    rep2[:, j_prog] = rep_prog
    rep2 = rep2[perm]
    true_b2 = B[perm]
    seed1 = np.ones((n, J), dtype=bool)
    seed2 = np.ones((n, J), dtype=bool)
    seed2[:, j_prog] = t1[perm]
    t1_partner1 = np.where(t1, inv, -1)
    t1_partner2 = np.where(t1[perm], perm, -1)

    f1 = RecordTable(schema, B.copy(), read, seed1, t1_partner1,
                     np.zeros(n, dtype=bool))
    f2 = RecordTable(schema, rep2, math[perm], seed2, t1_partner2,
                     np.zeros(n, dtype=bool))
    return GeneratedData(cfg, schema, f1, f2, inv, true_b2)


@dataclass
class TestSet:
    keys: np.ndarray    # (m, J) true codes
    y1: np.ndarray      # held-out file-1 outcomes
    y2: np.ndarray      # file-2 outcomes used for prediction


def draw_test_set(cfg: ScenarioConfig,
                  model: GenerationModel | None = None) -> TestSet:
    """Fresh evaluation records from the scenario's reserved RNG stream."""
    model = model or GenerationModel()
    ss_test = np.random.SeedSequence(cfg.seed).spawn(5)[4]
    B, read, math = draw_population(model, cfg.test_size,
                                    np.random.default_rng(ss_test))
    return TestSet(B, read, math)


def perfect_f2(data: GeneratedData) -> RecordTable:
    """File 2 with reporting faults undone: every code at its true value."""
    f2 = data.f2
    n = f2.n
    seed = np.ones((n, f2.schema.J), dtype=bool)
    return RecordTable(f2.schema, data.true_b2.copy(), f2.y.copy(), seed,
                       f2.t1_partner.copy(), f2.t2_seed.copy())


# ---------------------------------------------------------------------------
# on-disk format: F1.csv / F2.csv / truth.csv / scenario.json

def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    d = {
        "name": cfg.name, "n_pairs": cfg.n_pairs,
        "fault_level": cfg.fault_level, "seed_level": cfg.seed_level,
        "gamma_prior": cfg.gamma_prior, "mechanism": cfg.mechanism,
        "pool_cap": cfg.pool_cap, "test_size": cfg.test_size,
        "reps": cfg.reps, "seed": cfg.seed,
    }
    if cfg.confusion is not None:
        d["confusion"] = [list(row) for row in cfg.confusion]
    return d


def scenario_from_dict(d: dict) -> ScenarioConfig:
    conf = d.get("confusion")
    if conf is not None:
        conf = tuple(tuple(float(x) for x in row) for row in conf)
    return ScenarioConfig(
        name=d["name"], n_pairs=int(d["n_pairs"]),
        fault_level=float(d["fault_level"]), seed_level=float(d["seed_level"]),
        gamma_prior=d["gamma_prior"], mechanism=d["mechanism"],
        confusion=conf, pool_cap=int(d["pool_cap"]),
        test_size=int(d["test_size"]), reps=int(d.get("reps", 1)),
        seed=int(d["seed"]))


def write_dataset(data: GeneratedData, outdir: str):
    os.makedirs(outdir, exist_ok=True)
    write_table(os.path.join(outdir, "F1.csv"), data.f1)
    write_table(os.path.join(outdir, "F2.csv"), data.f2)
    names = data.schema.names
    with open(os.path.join(outdir, "truth.csv"), "w", encoding="utf-8",
              newline="") as fh:
        fh.write("f1_row,f2_row," + ",".join(f"true_{n}" for n in names) + "\n")
        for i in range(data.f1.n):
            p = int(data.truth_map[i])
            vals = ",".join(str(int(v)) for v in data.true_b2[p])
            fh.write(f"{i},{p},{vals}\n")
    with open(os.path.join(outdir, "scenario.json"), "w",
              encoding="utf-8") as fh:
        json.dump(scenario_to_dict(data.scenario), fh, indent=2,
                  sort_keys=True)
        fh.write("\n")


def read_dataset(outdir: str) -> GeneratedData:
    with open(os.path.join(outdir, "scenario.json"), encoding="utf-8") as fh:
        cfg = scenario_from_dict(json.load(fh))
    schema = hsb_schema()
    f1 = read_table(os.path.join(outdir, "F1.csv"), schema)
    f2 = read_table(os.path.join(outdir, "F2.csv"), schema)
    rows = np.loadtxt(os.path.join(outdir, "truth.csv"), delimiter=",",
                      skiprows=1, dtype=np.int64, ndmin=2)
    truth_map = np.empty(f1.n, dtype=np.int64)
    true_b2 = np.empty((f2.n, schema.J), dtype=np.int64)
    for r in rows:
        truth_map[r[0]] = r[1]
        true_b2[r[1]] = r[2:]
    return GeneratedData(cfg, schema, f1, f2, truth_map, true_b2)
