"""Matrix helpers against naive triple-loop and diagonal oracles."""

import numpy as np
import pytest

from robod.errors import ShapeError
from robod.linalg import (as_matrix, as_vector, check_finite, colwise_scale,
                          matmul, rowwise_scale)
from robod.rng import Rng


def _loop_matmul(a, b):
    n, m = a.shape
    r = b.shape[1]
    out = np.zeros((n, r))
    for i in range(n):
        for j in range(r):
            acc = 0.0
            for k in range(m):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def test_matmul_matches_triple_loop():
    rng = Rng(1)
    a = rng.uniform(-1.0, 1.0, 6 * 5).reshape(6, 5)
    b = rng.uniform(-1.0, 1.0, 5 * 4).reshape(5, 4)
    assert np.allclose(matmul(a, b), _loop_matmul(a, b), rtol=0, atol=1e-12)


def test_matmul_identity_and_projector():
    rng = Rng(2)
    a = rng.uniform(-2.0, 2.0, 4 * 4).reshape(4, 4)
    eye = np.eye(4)
    assert np.array_equal(matmul(a, eye), a)
    assert np.array_equal(matmul(eye, a), a)
    p = np.diag([1.0, 0.0, 1.0, 0.0])
    assert np.array_equal(matmul(a, p)[:, 1], np.zeros(4))


def test_matmul_associativity_within_float_tolerance():
    rng = Rng(3)
    a = rng.uniform(-1.0, 1.0, 8 * 6).reshape(8, 6)
    b = rng.uniform(-1.0, 1.0, 6 * 7).reshape(6, 7)
    c = rng.uniform(-1.0, 1.0, 7 * 5).reshape(7, 5)
    assert np.allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)),
                       rtol=1e-9, atol=1e-9)


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((4, 2)))


def test_rowwise_scale_is_left_diagonal_product():
    x = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    v = np.array([2.0, 3.0])
    want = np.diag(v) @ x
    assert np.array_equal(rowwise_scale(x, v), want)
    with pytest.raises(ShapeError):
        rowwise_scale(x, np.array([1.0, 2.0, 3.0]))


def test_colwise_scale_is_right_diagonal_product():
    x = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    v = np.array([1.0, 0.0, -1.0])
    want = x @ np.diag(v)
    assert np.array_equal(colwise_scale(x, v), want)
    with pytest.raises(ShapeError):
        colwise_scale(x, np.array([1.0, 2.0]))


def test_as_matrix_and_vector_validation():
    m = as_matrix([[1, 2], [3, 4]])
    assert m.dtype == np.float64 and m.shape == (2, 2)
    with pytest.raises(ShapeError):
        as_matrix([1.0, 2.0])
    v = as_vector([1, 2, 3])
    assert v.dtype == np.float64 and v.shape == (3,)
    with pytest.raises(ShapeError):
        as_vector([[1.0]])


def test_check_finite_rejects_nan_and_inf():
    check_finite(np.ones(3))
    with pytest.raises(ShapeError):
        check_finite(np.array([1.0, np.nan]))
    with pytest.raises(ShapeError):
        check_finite(np.array([np.inf]))
