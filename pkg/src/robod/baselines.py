"""Baseline detectors: a single plain autoencoder and an isolation forest.

The autoencoder baseline reuses the shared-model machinery in its degenerate
single-member, deepest-path-only form, so a one-config hyper-ensemble and a
vanilla run with the same seed produce bitwise identical scores.

The isolation forest is implemented from scratch: axis-aligned random trees
on per-tree subsamples, scores 2^(-E[h]/c(psi)). Splits are uniform in the
(min, max) range of a uniformly chosen feature, so scores depend only on the
order structure of the data (invariant to positive affine rescaling).
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .ensemble import ConfigRun, run_seed_for, train_vanilla
from .errors import ConfigError
from .linalg import as_matrix
from .rng import Rng

EULER_GAMMA = 0.5772156649015329


@dataclass(frozen=True)
class VanillaAEConfig:
    n_layers: int
    layer_decay: float
    lr: float
    epochs: int
    dropout: float = 0.0
    weight_decay: float = 0.0
    seed: int = 0
    batch_size: int = 128
    output_sigmoid: bool = True


def vanilla_ae_score(data, config: VanillaAEConfig) -> np.ndarray:
    """Per-point squared reconstruction error of one trained autoencoder."""
    scores, _ = vanilla_ae_score_with_loss(data, config)
    return scores


def vanilla_ae_score_with_loss(data, config: VanillaAEConfig):
    by_epoch, _ = train_vanilla(
        data, config.n_layers, config.layer_decay, config.lr,
        [config.epochs], config.dropout, config.weight_decay, config.seed,
        batch_size=config.batch_size, output_sigmoid=config.output_sigmoid)
    return by_epoch[int(config.epochs)]


# ---------------------------------------------------------------------------
# isolation forest


def average_path_length(n: int) -> float:
    """Expected unsuccessful-search path length in a BST of n points; the
    c(n) normalizer. c(1) = 0 by convention."""
    if n <= 1:
        return 0.0
    return 2.0 * (math.log(n - 1) + EULER_GAMMA) - 2.0 * (n - 1) / n


def score_from_path(avg_path: float, psi: int) -> float:
    return float(2.0 ** (-avg_path / average_path_length(psi)))


@dataclass
class _Leaf:
    size: int


@dataclass
class _Node:
    feature: int
    split: float
    left: object
    right: object


@dataclass
class IsoForest:
    trees: list
    n_trees: int
    subsample: int  # effective, after clamping to the dataset size
    subsample_requested: int
    seed: int
    height_limit: int
    n_features: int

    @property
    def c_psi(self) -> float:
        return average_path_length(self.subsample)


def _build_tree(x, idx, depth: int, limit: int, rng: Rng):
    if depth >= limit or idx.size <= 1:
        return _Leaf(size=idx.size)
    feature = int(rng.next_u64(1)[0] % np.uint64(x.shape[1]))
    col = x[idx, feature]
    lo = float(col.min())
    hi = float(col.max())
    if not lo < hi:
        return _Leaf(size=idx.size)
    split = float(rng.uniform(lo, hi, 1)[0])
    below = col < split
    left = idx[below]
    right = idx[~below]
    if left.size == 0 or right.size == 0:
        # split landed exactly on the range boundary
        return _Leaf(size=idx.size)
    return _Node(feature=feature, split=split,
                 left=_build_tree(x, left, depth + 1, limit, rng),
                 right=_build_tree(x, right, depth + 1, limit, rng))


def iforest_fit(data, n_trees: int = 100, subsample: int = 256,
                seed: int = 0) -> IsoForest:
    """Grow n_trees isolation trees, each on its own subsample drawn without
    replacement. A subsample larger than the dataset is clamped to it (with
    a warning) rather than rejected, so one grid can serve small datasets."""
    x = as_matrix(data, "data")
    n = x.shape[0]
    if n < 2:
        raise ConfigError(f"need at least 2 points to fit, got {n}")
    if n_trees < 1:
        raise ConfigError(f"n_trees must be >= 1, got {n_trees}")
    if subsample < 2:
        raise ConfigError(f"subsample must be >= 2, got {subsample}")
    eff = subsample
    if subsample > n:
        warnings.warn(
            f"subsample {subsample} exceeds the {n} available points; "
            f"using {n}", stacklevel=2)
        eff = n
    limit = int(math.ceil(math.log2(eff)))
    rng = Rng(seed)
    trees = []
    for _ in range(n_trees):
        idx = rng.choice_no_replace(n, eff)
        trees.append(_build_tree(x, idx, 0, limit, rng))
    return IsoForest(trees=trees, n_trees=n_trees, subsample=eff,
                     subsample_requested=subsample, seed=seed,
                     height_limit=limit, n_features=x.shape[1])


def _tree_paths(node, x, idx, depth: int, out: np.ndarray) -> None:
    if isinstance(node, _Leaf):
        out[idx] = depth + average_path_length(node.size)
        return
    below = x[idx, node.feature] < node.split
    _tree_paths(node.left, x, idx[below], depth + 1, out)
    _tree_paths(node.right, x, idx[~below], depth + 1, out)


def iforest_score(forest: IsoForest, data) -> np.ndarray:
    """Anomaly scores in (0, 1); higher means shorter average path."""
    x = as_matrix(data, "data")
    if x.shape[1] != forest.n_features:
        raise ConfigError(
            f"forest was fit on {forest.n_features} features, "
            f"got {x.shape[1]}")
    n = x.shape[0]
    paths = np.zeros(n)
    buf = np.zeros(n)
    all_idx = np.arange(n)
    for tree in forest.trees:
        _tree_paths(tree, x, all_idx, 0, buf)
        paths += buf
    paths /= forest.n_trees
    return np.power(2.0, -paths / forest.c_psi)


class IsoForestDetector:
    """Sweep detector: one forest per config. No training loss exists for
    this detector, so losses stay NaN."""

    name = "iforest"

    def required_dimensions(self):
        return ("n_trees", "subsample")

    def run_configs(self, x, configs, base_seed: int):
        runs = []
        for cfg in configs:
            run_seed = run_seed_for(base_seed, cfg.values)
            started = time.perf_counter()
            forest = iforest_fit(
                x, n_trees=int(cfg.values["n_trees"]),
                subsample=int(cfg.values["subsample"]), seed=run_seed)
            scores = iforest_score(forest, x)
            seconds = time.perf_counter() - started
            runs.append(ConfigRun(cfg, scores, float("nan"), seconds,
                                  run_seed))
        return runs
