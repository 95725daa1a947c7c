"""CSV ingestion, min-max scaling, and transductive task assembly.

Datasets carry a provenance manifest (source file, content hash, scaling
parameters, assembly recipe, seed) so every derived artifact can state
exactly which rows and transforms produced it. Feature matrices never leave
this module unscaled without the manifest saying so.
"""

from __future__ import annotations

import csv
import hashlib
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParseError
from .linalg import Matrix, as_matrix
from .rng import Rng


@dataclass
class Dataset:
    """Feature matrix plus labels. Labels are 0/1 after task assembly
    (1 = outlier); multiclass ids are allowed before assemble_polluted."""

    features: Matrix
    labels: np.ndarray
    name: str
    manifest: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def outlier_fraction(self) -> float:
        return float((self.labels == 1).mean())


@dataclass(frozen=True)
class PollutedRecipe:
    """One class becomes the inliers; every other class is subsampled in
    (default 10%) as outliers, train set == test set."""

    inlier_class: int
    rate: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.rate <= 1.0:
            raise ConfigError(f"rate must be in (0, 1], got {self.rate}")


def _file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_csv(path, label_column: str = "label") -> Dataset:
    """Parse a headered numeric CSV into an unscaled Dataset.

    Row/column coordinates in errors are 1-based file coordinates (the
    header is row 1).
    """
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise ParseError(
                f"{path}: label column {label_column!r} not in header "
                f"{header}")
        label_idx = header.index(label_column)
        feature_idx = [i for i in range(len(header)) if i != label_idx]
        rows = []
        labels = []
        for file_row, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise ParseError(
                    f"{path}: row {file_row} has {len(rec)} cells, "
                    f"expected {len(header)}")
            vals = []
            for col_idx, cell in enumerate(rec):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(
                        f"{path}: non-numeric cell at row {file_row}, "
                        f"column {col_idx + 1}: {cell!r}") from None
                vals.append(v)
            labels.append(vals[label_idx])
            rows.append([vals[i] for i in feature_idx])
    if not rows:
        raise ParseError(f"{path}: no data rows")
    features = np.array(rows, dtype=np.float64)
    raw_labels = np.array(labels)
    int_labels = raw_labels.astype(np.int64)
    if not np.all(int_labels == raw_labels):
        raise ParseError(f"{path}: label column contains non-integer values")
    name = os.path.splitext(os.path.basename(str(path)))[0]
    manifest = {
        "source": str(path),
        "sha256": _file_sha256(path),
        "label_column": label_column,
        "n": int(features.shape[0]),
        "dim": int(features.shape[1]),
        "feature_columns": [header[i] for i in feature_idx],
    }
    return Dataset(features, int_labels, name, manifest)


def minmax_scale(ds: Dataset) -> Dataset:
    """Per-feature (x - min) / (max - min); constant columns map to 0.

    Scaling statistics are computed on the whole dataset, which is the
    correct convention for the transductive setting (train == test).
    """
    x = as_matrix(ds.features, "features")
    mins = x.min(axis=0)
    maxs = x.max(axis=0)
    span = maxs - mins
    constant = span == 0.0
    safe_span = np.where(constant, 1.0, span)
    scaled = (x - mins) / safe_span
    scaled[:, constant] = 0.0
    manifest = dict(ds.manifest)
    manifest["scaler"] = {
        "kind": "minmax",
        "min": mins.tolist(),
        "max": maxs.tolist(),
    }
    return Dataset(np.ascontiguousarray(scaled), ds.labels.copy(), ds.name,
                   manifest)


def assemble_polluted(ds: Dataset, recipe: PollutedRecipe) -> Dataset:
    """Build a transductive outlier task from a multiclass dataset.

    All rows of the inlier class keep label 0; each other class contributes
    a seeded without-replacement subsample of round(rate * class size)
    rows (at least 1), labeled 1. Row order follows the original dataset.
    """
    labels = ds.labels
    classes = np.unique(labels)
    if recipe.inlier_class not in classes:
        raise ConfigError(
            f"inlier class {recipe.inlier_class} not present "
            f"(classes: {classes.tolist()})")
    rng = Rng(recipe.seed)
    keep = np.zeros(ds.n, dtype=bool)
    keep[labels == recipe.inlier_class] = True
    for cls in classes:
        if cls == recipe.inlier_class:
            continue
        members = np.flatnonzero(labels == cls)
        count = max(1, int(np.floor(recipe.rate * members.size + 0.5)))
        picked = members[rng.choice_no_replace(members.size, count)]
        keep[picked] = True
    idx = np.flatnonzero(keep)
    new_labels = (labels[idx] != recipe.inlier_class).astype(np.int64)
    manifest = dict(ds.manifest)
    manifest["polluted_recipe"] = {
        "inlier_class": int(recipe.inlier_class),
        "rate": recipe.rate,
        "seed": recipe.seed,
        "row_indices": idx.tolist(),
    }
    return Dataset(np.ascontiguousarray(ds.features[idx]), new_labels,
                   ds.name, manifest)
