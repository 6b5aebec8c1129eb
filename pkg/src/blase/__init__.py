"""Simultaneous Bayesian file matching and regression when the
categorical variables that define candidate links can be misreported.

Records from two files are grouped into pools by their in-common codes;
within each pool a permutation links the sides one-to-one.  The full
sampler additionally treats some codes as error-prone: per-record error
flags, per-field error rates, a uniform misreporting model, and a
latent-class prior over the true codes let file-2 records migrate
between pools as the chain runs.  The blocked baseline sampler keeps
every record in its reported pool.
"""
from .chain import (ChainConfig, ChainState, PosteriorStore, run_chain,
                    theta_labels)
from .config import ConfigError, RunConfig, load_config
from .design import DesignCache, DesignSpec, parse_design
from .error_model import GAMMA_PRESETS, GammaParams
from .latent_class import DpHyper
from .metrics import MethodResult, compare_methods, compute_pmr, compute_rmse
from .pools import LinkState
from .regression import Theta
from .schema import (ROLE_BV, ROLE_MV, Field, InCommonSchema, RecordTable,
                     read_table, write_table)
from .simulate import (GeneratedData, GenerationModel, ScenarioConfig,
                       TestSet, draw_test_set, generate_dataset, hsb_design,
                       hsb_schema, scenario_preset, true_theta, write_dataset)

__version__ = "0.1.0"

__all__ = [
    "ChainConfig", "ChainState", "PosteriorStore", "run_chain",
    "theta_labels", "ConfigError", "RunConfig", "load_config", "DesignCache",
    "DesignSpec", "parse_design", "GAMMA_PRESETS", "GammaParams", "DpHyper",
    "MethodResult", "compare_methods", "compute_pmr", "compute_rmse",
    "LinkState", "Theta", "ROLE_BV", "ROLE_MV", "Field", "InCommonSchema",
    "RecordTable", "read_table", "write_table", "GeneratedData",
    "GenerationModel", "ScenarioConfig", "TestSet", "draw_test_set",
    "generate_dataset", "hsb_design", "hsb_schema", "scenario_preset",
    "true_theta", "write_dataset",
]
