"""Metrics: rank-based AUROC and sweep distribution summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricError, ShapeError


@dataclass(frozen=True)
class LabeledScores:
    """Outlier scores with binary ground truth (1 = outlier)."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64).ravel()
        y = np.asarray(self.labels).ravel()
        if s.shape[0] != y.shape[0]:
            raise ShapeError(
                f"{s.shape[0]} scores vs {y.shape[0]} labels")
        if not np.all((y == 0) | (y == 1)):
            raise MetricError("labels must be 0 (inlier) or 1 (outlier)")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y.astype(np.int64))


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the average of their rank range."""
    x = np.asarray(x, dtype=np.float64).ravel()
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    xs = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and xs[j + 1] == xs[i]:
            j += 1
        avg = 0.5 * (i + j) + 1.0  # mean of 1-based ranks i+1 .. j+1
        ranks[order[i: j + 1]] = avg
        i = j + 1
    return ranks


def auroc(ls: LabeledScores) -> float:
    """Probability a random outlier outscores a random inlier; ties count
    one half (rank-sum estimator with average ranks)."""
    y = ls.labels
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError(
            f"AUROC needs both classes, got {n_pos} outliers / {n_neg} inliers")
    ranks = average_ranks(ls.scores)
    rank_sum = float(ranks[y == 1].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def auroc_of(scores, labels) -> float:
    return auroc(LabeledScores(np.asarray(scores), np.asarray(labels)))


def stats_dict(values) -> dict:
    """min/max/mean/std/quartiles of a value collection.

    Population standard deviation; quartiles by linear interpolation of the
    sorted values. Keys follow the metrics JSON schema.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise MetricError("cannot summarize an empty collection")
    q1, median, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    return {
        "min": float(v.min()),
        "max": float(v.max()),
        "mean": float(v.mean()),
        "std": float(v.std()),
        "q1": float(q1),
        "median": float(median),
        "q3": float(q3),
        "runs": int(v.size),
    }


@dataclass
class SweepSummary:
    """Distribution of per-config AUROCs, per seed and across seeds."""

    per_seed: list  # one stats_dict per seed
    cross_seed_mean: float  # mean of per-seed means
    cross_seed_std: float  # population std of per-seed means
    matrix: np.ndarray  # (n_seeds, n_configs) AUROC values

    def as_dict(self) -> dict:
        return {
            "per_seed": self.per_seed,
            "cross_seed_mean": self.cross_seed_mean,
            "cross_seed_std": self.cross_seed_std,
        }


def summarize(per_config_aurocs_per_seed) -> SweepSummary:
    """Summarize an (n_seeds, n_configs) AUROC matrix (list of lists is fine)."""
    matrix = np.asarray(per_config_aurocs_per_seed, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[None, :]
    if matrix.size == 0:
        raise MetricError("cannot summarize an empty sweep")
    per_seed = [stats_dict(row) for row in matrix]
    means = np.array([s["mean"] for s in per_seed])
    return SweepSummary(
        per_seed=per_seed,
        cross_seed_mean=float(means.mean()),
        cross_seed_std=float(means.std()),
        matrix=matrix,
    )
