"""Hyper-ensemble outlier detection on tabular data.

The core detector trains, per hyperparameter config, one autoencoder
ensemble whose members share parameters across K widths and L depths, and
averages squared reconstruction errors over members and configs. Baselines
(a single plain autoencoder, an isolation forest), a sensitivity-sweep
harness, rank-based evaluation, and CSV data handling round out the package.

All randomness flows through one counter-based generator (`Rng`), training
runs are prefix-deterministic, and run seeds derive from config content, so
every score is bitwise reproducible for a given seed and backend.
"""

import os as _os

# Fixed BLAS threading keeps float summation orders, and therefore scores,
# reproducible across machines. setdefault: an explicit setting wins.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")
del _os, _var

__version__ = "0.1.0"

from .aes import (AESModel, aes_train, extract_path_network, load_model,
                  run_dense_network, save_model, score_path_errors)
from .backend import available_backends, backend_name
from .baselines import (IsoForest, VanillaAEConfig, average_path_length,
                        iforest_fit, iforest_score, vanilla_ae_score)
from .batchens import BELayer, WidthPlan, extract_member, plan_widths
from .dataio import (Dataset, PollutedRecipe, assemble_polluted, load_csv,
                     minmax_scale)
from .ensemble import (DEFAULT_DECAYS, DEFAULT_INDEPENDENT_GRID,
                       DEFAULT_IFOREST_GRID, DEFAULT_SHARED_GRID, HpConfig,
                       HpGrid, expand_grid, hyper_ensemble_of_sweep,
                       irobod_score, robod_score, robod_subsampled_score,
                       select_by_lowest_loss, sweep)
from .errors import (ConfigError, MetricError, ParseError, RobodError,
                     ShapeError, StateError)
from .evalkit import LabeledScores, auroc, auroc_of, stats_dict, summarize
from .rng import Rng, derive_seed

__all__ = [
    "AESModel", "BELayer", "ConfigError", "DEFAULT_DECAYS",
    "DEFAULT_IFOREST_GRID", "DEFAULT_INDEPENDENT_GRID",
    "DEFAULT_SHARED_GRID", "Dataset", "HpConfig", "HpGrid", "IsoForest",
    "LabeledScores", "MetricError", "ParseError", "PollutedRecipe",
    "RobodError", "Rng", "ShapeError", "StateError", "VanillaAEConfig",
    "WidthPlan", "aes_train", "assemble_polluted", "auroc", "auroc_of",
    "available_backends", "average_path_length", "backend_name",
    "derive_seed", "expand_grid", "extract_member", "extract_path_network",
    "hyper_ensemble_of_sweep", "iforest_fit", "iforest_score",
    "irobod_score", "load_csv", "load_model", "minmax_scale", "plan_widths",
    "robod_score", "robod_subsampled_score", "run_dense_network",
    "save_model", "score_path_errors", "select_by_lowest_loss",
    "stats_dict", "summarize", "sweep", "vanilla_ae_score",
]
