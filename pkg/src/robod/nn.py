"""Dense layers, activations, dropout, Adam, and a finite-difference
gradient-check harness.

Everything here is written against explicit caches and manual backprop; there
is no autodiff graph. The DenseLayer is the cold-path building block (used by
member extraction and oracles); the shared-weight ensemble layer in
robod.batchens is the hot path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import ConfigError, ShapeError, StateError
from .linalg import Matrix, as_matrix
from .rng import Rng

_ACT_CODES = {
    "identity": backend.ACT_IDENTITY,
    "leaky_relu": backend.ACT_LEAKY_RELU,
    "sigmoid": backend.ACT_SIGMOID,
    "relu": backend.ACT_RELU,
}


@dataclass(frozen=True)
class Activation:
    """Elementwise nonlinearity. kind: identity | leaky_relu | sigmoid | relu."""

    kind: str = "leaky_relu"
    slope: float = 0.01

    def __post_init__(self):
        if self.kind not in _ACT_CODES:
            raise ConfigError(f"unknown activation kind {self.kind!r}")

    @property
    def code(self) -> int:
        return _ACT_CODES[self.kind]

    @property
    def zero_preserving(self) -> bool:
        """True when phi(0) == 0; required wherever width masks apply."""
        return self.kind != "sigmoid"

    def apply(self, pre: np.ndarray) -> np.ndarray:
        return backend.act_apply(np.ascontiguousarray(pre, dtype=np.float64),
                                 self.code, self.slope)

    def grad_from_output(self, out: np.ndarray) -> np.ndarray:
        """dphi/dpre recovered from the forward output (see backend docs)."""
        return backend.act_grad_from_output(
            np.ascontiguousarray(out, dtype=np.float64), self.code, self.slope)


IDENTITY = Activation("identity")
LEAKY_RELU = Activation("leaky_relu", 0.01)
SIGMOID = Activation("sigmoid")
RELU = Activation("relu")


def init_weight(fan_in: int, fan_out: int, rng: Rng) -> Matrix:
    """Uniform[-1/sqrt(fan_in), +1/sqrt(fan_in)] init, row-major draw order."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, fan_in * fan_out).reshape(fan_in, fan_out)


class DenseLayer:
    """Plain fully connected layer with cached forward state for backprop."""

    def __init__(self, fan_in: int, fan_out: int, rng: Rng | None = None,
                 weight: Matrix | None = None, bias: np.ndarray | None = None):
        if fan_in < 1 or fan_out < 1:
            raise ConfigError(f"layer dims must be >= 1, got {fan_in}x{fan_out}")
        self.fan_in = fan_in
        self.fan_out = fan_out
        if weight is not None:
            weight = as_matrix(weight, "weight")
            if weight.shape != (fan_in, fan_out):
                raise ShapeError(
                    f"weight shape {weight.shape} != ({fan_in}, {fan_out})")
            self.weight = weight.copy()
        elif rng is not None:
            self.weight = init_weight(fan_in, fan_out, rng)
        else:
            raise ConfigError("DenseLayer needs either a weight or an rng")
        if bias is not None:
            bias = np.ascontiguousarray(bias, dtype=np.float64)
            if bias.shape != (fan_out,):
                raise ShapeError(f"bias shape {bias.shape} != ({fan_out},)")
            self.bias = bias.copy()
        else:
            self.bias = np.zeros(fan_out)
        self._cache = None

    def forward(self, x: Matrix, act: Activation) -> Matrix:
        return dense_forward(self, x, act)

    def backward(self, upstream_grad: Matrix):
        return dense_backward(self, upstream_grad)


def dense_forward(layer: DenseLayer, x: Matrix, act: Activation) -> Matrix:
    """phi(x @ W + bias), caching what the backward pass needs."""
    x = as_matrix(x, "x")
    if x.shape[1] != layer.fan_in:
        raise ShapeError(
            f"input has {x.shape[1]} columns, layer expects {layer.fan_in}")
    out = act.apply(x @ layer.weight + layer.bias)
    layer._cache = (x, out, act)
    return out


def dense_backward(layer: DenseLayer, upstream_grad: Matrix):
    """Gradients (input_grad, weight_grad, bias_grad) of the cached forward."""
    if layer._cache is None:
        raise StateError("dense_backward called before dense_forward")
    x, out, act = layer._cache
    g = as_matrix(upstream_grad, "upstream_grad")
    if g.shape != out.shape:
        raise ShapeError(
            f"upstream grad shape {g.shape} != output shape {out.shape}")
    gpre = g * act.grad_from_output(out)
    weight_grad = x.T @ gpre
    bias_grad = gpre.sum(axis=0)
    input_grad = gpre @ layer.weight.T
    return input_grad, weight_grad, bias_grad


@dataclass
class AdamState:
    """Adam accumulators for an ordered parameter list.

    Weight decay is coupled (added to the raw gradient); per-parameter decay
    flags let the caller exempt tensors (ensemble rank-1 factors and biases
    are exempt while the shared weights decay).
    """

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    _moments: list = field(default_factory=list, repr=False)

    def _ensure_moments(self, params):
        if not self._moments:
            self._moments = [
                (np.zeros_like(p), np.zeros_like(p)) for p in params
            ]
        elif len(self._moments) != len(params):
            raise ShapeError(
                f"AdamState tracks {len(self._moments)} tensors, "
                f"got {len(params)}")


def adam_step(state: AdamState, params, grads, decay_flags=None) -> None:
    """One Adam update, in place on every tensor in params."""
    if len(params) != len(grads):
        raise ShapeError(
            f"{len(params)} params vs {len(grads)} grads")
    state._ensure_moments(params)
    if decay_flags is None:
        decay_flags = [True] * len(params)
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p, g, (m, v), dec in zip(params, grads, state._moments, decay_flags):
        if p.shape != g.shape:
            raise ShapeError(f"param shape {p.shape} != grad shape {g.shape}")
        wd = state.weight_decay if dec else 0.0
        backend.adam_update(p.ravel(), np.ascontiguousarray(g).ravel(),
                            m.ravel(), v.ravel(),
                            state.lr, state.beta1, state.beta2, state.eps,
                            wd, bc1, bc2)


@dataclass(frozen=True)
class DropoutSpec:
    """Inverted dropout: keep with prob 1-rate, scale kept entries by 1/(1-rate)."""

    rate: float = 0.0
    training: bool = True

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {self.rate}")

    @property
    def active(self) -> bool:
        return self.training and self.rate > 0.0


def dropout_apply(spec: DropoutSpec, x: Matrix, rng: Rng) -> Matrix:
    """Apply dropout; identity (and no rng consumption) when inactive."""
    if not spec.active:
        return x
    x = as_matrix(x, "x")
    u = rng.uniform(0.0, 1.0, x.size).reshape(x.shape)
    out, _ = backend.dropout_mask_apply(x, u, spec.rate)
    return out


def mse_loss(x: Matrix, xhat: Matrix) -> float:
    """Mean over rows of squared L2 reconstruction error."""
    x = as_matrix(x, "x")
    xhat = as_matrix(xhat, "xhat")
    if x.shape != xhat.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {xhat.shape}")
    return float(backend.rowwise_sqerr(x, xhat).mean())


def grad_check(closure, params, h: float = 1e-6, tol: float = 1e-5) -> dict:
    """Compare analytic gradients against central finite differences.

    closure() must deterministically return (loss, grads) for the current
    parameter values, with grads aligned to params. Returns a report with the
    max relative deviation over all parameter entries and a pass/fail flag.
    """
    _, analytic = closure()
    analytic = [np.array(g, dtype=np.float64, copy=True) for g in analytic]
    per_param = []
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.ravel()
        gflat = ga.ravel()
        pmax = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp, _ = closure()
            flat[i] = orig - h
            lm, _ = closure()
            flat[i] = orig
            num = (lp - lm) / (2.0 * h)
            # the difference quotient carries ~eps*|loss|/h of rounding
            # noise, so entries below that scale can only be compared
            # absolutely; the floor is that measurement limit with margin
            denom = max(abs(num), abs(gflat[i]), 1e-4)
            dev = abs(num - gflat[i]) / denom
            pmax = max(pmax, dev)
        per_param.append(pmax)
        worst = max(worst, pmax)
    return {
        "max_rel_deviation": worst,
        "per_param": per_param,
        "tol": tol,
        "passed": worst < tol,
    }
