"""Run configuration: a flat text file of dotted keys.

Lines look like `chain.iterations = 2000`; blank lines and lines starting
with '#' are skipped.  Every key must be in the registry below; unknown
keys are hard errors so a typo cannot silently fall back to a default.
configparser and friends want nested sections and tolerate stray keys,
hence the small custom parser.
"""
from __future__ import annotations

from dataclasses import dataclass

from .chain import ChainConfig
from .design import DesignSpec, parse_design
from .error_model import GammaParams
from .latent_class import DpHyper
from .simulate import PRESET_LEVELS, ScenarioConfig, hsb_schema

_DEF_Y1 = "intercept, y2, prog=2, prog=3"
_DEF_Y2 = "intercept, prog=2, prog=3, ses=2, ses=3, female=2"

# key -> (type tag, default); None default means "not set"
REGISTRY: dict[str, tuple[str, object]] = {
    "scenario.name": ("str", "HSHF"),
    "scenario.n_pairs": ("int", 5000),
    "scenario.fault_level": ("float", None),
    "scenario.seed_level": ("float", None),
    "scenario.gamma_prior": ("str", "D"),
    "scenario.mechanism": ("str", "uniform"),
    "scenario.confusion": ("matrix", None),
    "scenario.pool_cap": ("int", 10),
    "scenario.test_size": ("int", 500),
    "scenario.reps": ("int", 1),
    "scenario.seed": ("int", 0),
    "chain.model": ("str", "blase"),
    "chain.iterations": ("int", 10000),
    "chain.burnin": ("int", 500),
    "chain.thin": ("int", 2),
    "chain.seed": ("int", 0),
    "chain.switch_threshold": ("int", 5),
    "chain.switch_repeats": ("int", 30),
    "chain.restrict_moves": ("bool", True),
    "chain.store_snapshots": ("bool", False),
    "model.y1_terms": ("str", _DEF_Y1),
    "model.y2_terms": ("str", _DEF_Y2),
    "prior.dp_classes": ("int", 30),
    "prior.dp_a_alpha": ("float", 0.25),
    "prior.dp_b_alpha": ("float", 0.25),
    "prior.dp_dirichlet_a": ("float", 1.0),
    "prior.gamma_a": ("float", None),
    "prior.gamma_b": ("float", None),
    "io.data_dir": ("str", "data"),
    "io.out_dir": ("str", "out"),
}


class ConfigError(ValueError):
    """Bad key, bad value, or unsatisfiable combination."""


def _convert(key: str, tag: str, raw: str):
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if tag == "matrix":
            return tuple(tuple(float(x) for x in row.split(","))
                         for row in raw.split(";"))
        return raw
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {raw!r}") from e


def parse_config_text(text: str) -> dict:
    values: dict = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ConfigError(f"line {ln}: expected 'key = value', got {s!r}")
        key, _, raw = s.partition("=")
        key = key.strip()
        raw = raw.split("#", 1)[0].strip()
        if key not in REGISTRY:
            raise ConfigError(f"line {ln}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {ln}: duplicate key {key!r}")
        values[key] = _convert(key, REGISTRY[key][0], raw)
    return values


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig
    chain: ChainConfig
    design: DesignSpec
    hyper: DpHyper
    gamma_override: GammaParams | None
    data_dir: str
    out_dir: str

    def gamma_params(self) -> GammaParams:
        return self.gamma_override or self.scenario.gamma_params()


def build_run_config(values: dict, preset: str | None = None,
                     seed: int | None = None, model: str | None = None,
                     out: str | None = None, reps: int | None = None) -> RunConfig:
    """Merge defaults, file values, and command-line overrides."""
    merged = {k: d for k, (_, d) in REGISTRY.items()}
    merged.update(values)
    if preset is not None:
        merged["scenario.name"] = preset
    if seed is not None:
        merged["scenario.seed"] = seed
        merged["chain.seed"] = seed
    if model is not None:
        merged["chain.model"] = model
    if out is not None:
        merged["io.out_dir"] = out
    if reps is not None:
        merged["scenario.reps"] = reps

    name = merged["scenario.name"]
    fault, seed_lv = merged["scenario.fault_level"], merged["scenario.seed_level"]
    if name in PRESET_LEVELS:
        pf, ps = PRESET_LEVELS[name]
        fault = pf if fault is None else fault
        seed_lv = ps if seed_lv is None else seed_lv
    elif fault is None or seed_lv is None:
        raise ConfigError(f"scenario {name!r} is not a preset; set "
                          "scenario.fault_level and scenario.seed_level")
    try:
        scenario = ScenarioConfig(
            name=name, n_pairs=merged["scenario.n_pairs"],
            fault_level=fault, seed_level=seed_lv,
            gamma_prior=merged["scenario.gamma_prior"],
            mechanism=merged["scenario.mechanism"],
            confusion=merged["scenario.confusion"],
            pool_cap=merged["scenario.pool_cap"],
            test_size=merged["scenario.test_size"],
            reps=merged["scenario.reps"], seed=merged["scenario.seed"])
        chain = ChainConfig(
            model=merged["chain.model"],
            iterations=merged["chain.iterations"],
            burnin=merged["chain.burnin"], thin=merged["chain.thin"],
            seed=merged["chain.seed"],
            switch_threshold=merged["chain.switch_threshold"],
            switch_repeats=merged["chain.switch_repeats"],
            restrict_to_f1_keys=merged["chain.restrict_moves"],
            store_snapshots=merged["chain.store_snapshots"])
        design = parse_design(
            [t.strip() for t in merged["model.y1_terms"].split(",")],
            [t.strip() for t in merged["model.y2_terms"].split(",")],
            hsb_schema())
        hyper = DpHyper(H=merged["prior.dp_classes"],
                        a_alpha=merged["prior.dp_a_alpha"],
                        b_alpha=merged["prior.dp_b_alpha"],
                        dirichlet_a=merged["prior.dp_dirichlet_a"])
        ga, gb = merged["prior.gamma_a"], merged["prior.gamma_b"]
        if (ga is None) != (gb is None):
            raise ConfigError("prior.gamma_a and prior.gamma_b come as a pair")
        override = GammaParams(ga, gb) if ga is not None else None
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return RunConfig(scenario, chain, design, hyper, override,
                     merged["io.data_dir"], merged["io.out_dir"])


def load_config(path: str | None, **overrides) -> RunConfig:
    values: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            values = parse_config_text(fh.read())
    return build_run_config(values, **overrides)
