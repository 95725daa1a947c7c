import numpy as np
import pytest

from robod.rng import Rng


@pytest.fixture
def uniform_matrix():
    """Factory for reproducible uniform matrices in [lo, hi)."""

    def make(seed, rows, cols, lo=0.0, hi=1.0):
        return Rng(seed).uniform(lo, hi, rows * cols).reshape(rows, cols)

    return make


@pytest.fixture
def tiny_csv(tmp_path):
    """Write a small labeled CSV: an inlier blob plus a few spread outliers.

    Returns (path, features, labels).
    """

    def make(name="tiny.csv", n_in=60, n_out=6, dim=4, seed=42):
        rng = Rng(seed)
        inliers = rng.uniform(0.4, 0.6, n_in * dim).reshape(n_in, dim)
        outliers = rng.uniform(0.0, 1.0, n_out * dim).reshape(n_out, dim)
        x = np.vstack([inliers, outliers])
        y = np.array([0] * n_in + [1] * n_out)
        perm = rng.permutation(len(y))
        x, y = x[perm], y[perm]
        path = tmp_path / name
        with open(path, "w") as fh:
            fh.write(",".join(f"f{j}" for j in range(dim)) + ",label\n")
            for row, lab in zip(x, y):
                cells = ",".join(repr(float(v)) for v in row)
                fh.write(f"{cells},{int(lab)}\n")
        return path, x, y

    return make
