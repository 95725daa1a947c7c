"""Dense 2-D float64 matrices and the few primitive operations on them.

A Matrix is a C-contiguous float64 numpy array of rank 2; these helpers
enforce that contract and give shape violations a uniform error type. Heavier
fused operations live in the kernel backends (see robod.backend).
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

Matrix = np.ndarray


def as_matrix(a, name: str = "matrix") -> Matrix:
    """Coerce to a rank-2 C-contiguous float64 array."""
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={out.ndim}")
    return out


def as_vector(v, name: str = "vector") -> np.ndarray:
    out = np.ascontiguousarray(v, dtype=np.float64)
    if out.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got ndim={out.ndim}")
    return out


def check_finite(a, name: str = "array") -> None:
    if not np.all(np.isfinite(a)):
        raise ShapeError(f"{name} contains non-finite entries")


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Standard matrix product a @ b."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul shape mismatch: a is {a.shape[0]}x{a.shape[1]}, "
            f"b is {b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


def rowwise_scale(x: Matrix, v) -> Matrix:
    """Scale row i of x by v[i]; equivalent to diag(v) @ x."""
    x = as_matrix(x, "x")
    v = as_vector(v, "v")
    if v.shape[0] != x.shape[0]:
        raise ShapeError(
            f"rowwise_scale needs len(v) == rows: {v.shape[0]} != {x.shape[0]}"
        )
    return x * v[:, None]


def colwise_scale(x: Matrix, v) -> Matrix:
    """Scale column j of x by v[j]; equivalent to x @ diag(v)."""
    x = as_matrix(x, "x")
    v = as_vector(v, "v")
    if v.shape[0] != x.shape[1]:
        raise ShapeError(
            f"colwise_scale needs len(v) == cols: {v.shape[0]} != {x.shape[1]}"
        )
    return x * v[None, :]
