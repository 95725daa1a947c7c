"""Pure-numpy implementations of the hot kernels.

This is the fallback backend; `robod._kernels` (compiled) implements the same
functions with fused loops and direct BLAS calls. Both backends must agree to
near machine precision on every function here (see tests/test_backend.py).

Shared layout conventions:
  - member blocks are stacked vertically: a (K*b, m) matrix holds K blocks of
    b rows each, block i owning rows [i*b, (i+1)*b)
  - `s` is (K, m): per-member input factors
  - `r_eff` is (K, r): per-member output factors with the width mask already
    multiplied in; `b_eff` likewise for biases
  - activation codes: 0 identity, 1 leaky relu, 2 sigmoid, 3 relu
"""

from __future__ import annotations

import numpy as np

ACT_IDENTITY = 0
ACT_LEAKY_RELU = 1
ACT_SIGMOID = 2
ACT_RELU = 3

NAME = "py"


def act_apply(pre: np.ndarray, act: int, slope: float) -> np.ndarray:
    if act == ACT_IDENTITY:
        return pre
    if act == ACT_LEAKY_RELU:
        return np.where(pre > 0.0, pre, slope * pre)
    if act == ACT_SIGMOID:
        out = np.empty_like(pre)
        pos = pre >= 0.0
        out[pos] = 1.0 / (1.0 + np.exp(-pre[pos]))
        e = np.exp(pre[~pos])
        out[~pos] = e / (1.0 + e)
        return out
    if act == ACT_RELU:
        return np.maximum(pre, 0.0)
    raise ValueError(f"unknown activation code {act}")


def act_grad_from_output(out: np.ndarray, act: int, slope: float) -> np.ndarray:
    """dPhi/dpre expressed through the already-computed output.

    All supported activations admit this (their derivative is recoverable
    from the output value); the convention at pre == 0 is the slope for the
    (leaky) relu family, matching the compiled backend exactly.
    """
    if act == ACT_IDENTITY:
        return np.ones_like(out)
    if act == ACT_LEAKY_RELU:
        return np.where(out > 0.0, 1.0, slope)
    if act == ACT_SIGMOID:
        return out * (1.0 - out)
    if act == ACT_RELU:
        return (out > 0.0).astype(np.float64)
    raise ValueError(f"unknown activation code {act}")


def be_forward(x, w, s, r_eff, b_eff, n_members, act, slope):
    """Shared-weight ensemble layer forward pass.

    x: (K*b, m); w: (m, r); s: (K, m); r_eff, b_eff: (K, r).
    Returns (out, xs, y) where xs = blockwise x*s and y = xs @ w are the
    caches the backward pass needs.
    """
    n, m = x.shape
    b = n // n_members
    xs = (x.reshape(n_members, b, m) * s[:, None, :]).reshape(n, m)
    y = xs @ w
    r = w.shape[1]
    pre = (y.reshape(n_members, b, r) * r_eff[:, None, :]
           + b_eff[:, None, :]).reshape(n, r)
    out = act_apply(pre, act, slope)
    return np.ascontiguousarray(out), xs, y


def be_backward(gout, out, y, xs, x, w, s, r_eff, mask, n_members, act, slope):
    """Gradients of be_forward.

    Returns (gx, gw, gs, gr, gbias). Masked positions of gr/gbias are exactly
    zero: the mask enters pre = y*(r*mask) + bias*mask, so the chain rule
    kills them; it is applied explicitly here because the activation
    derivative at a masked (zero) pre-activation need not vanish.
    """
    n, r = gout.shape
    m = x.shape[1]
    b = n // n_members
    gpre = gout * act_grad_from_output(out, act, slope)
    g3 = gpre.reshape(n_members, b, r)
    gbias = g3.sum(axis=1) * mask
    gr = (g3 * y.reshape(n_members, b, r)).sum(axis=1) * mask
    gy = (g3 * r_eff[:, None, :]).reshape(n, r)
    gw = xs.T @ gy
    gxs = gy @ w.T
    gxs3 = gxs.reshape(n_members, b, m)
    gs = (gxs3 * x.reshape(n_members, b, m)).sum(axis=1)
    gx = (gxs3 * s[:, None, :]).reshape(n, m)
    return np.ascontiguousarray(gx), gw, gs, gr, gbias


def adam_update(p, g, m, v, lr, beta1, beta2, eps, weight_decay, bc1, bc2):
    """One fused Adam step, in place on flat views p/m/v.

    Weight decay is coupled (added to the gradient before the moment
    updates). bc1/bc2 are the precomputed bias corrections 1-beta^t.
    """
    if weight_decay != 0.0:
        g = g + weight_decay * p
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def rowwise_sqerr(x, xhat):
    """Per-row squared L2 reconstruction error, shape (n,)."""
    d = x - xhat
    return np.einsum("ij,ij->i", d, d)


def dropout_mask_apply(x, u, rate):
    """Inverted dropout given pre-drawn uniforms u (same shape as x).

    Returns (out, scale) where scale is 1/(1-rate) at kept entries and 0 at
    dropped ones; backward multiplies by the same scale.
    """
    scale = np.where(u >= rate, 1.0 / (1.0 - rate), 0.0)
    return x * scale, scale
