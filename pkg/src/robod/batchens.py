"""Zero-masked shared-weight ensemble layers.

One weight matrix W (m x r) is shared by K members; member i owns a rank-1
factor pair (s_i over inputs, r_i over outputs), a bias, and a fixed binary
width mask alpha_i over outputs. The forward pass for member i is

    phi((x_i * s_i) @ W * (r_i * alpha_i) + bias_i * alpha_i)

computed for all members in one stacked pass, which is algebraically the
dense network with weight W * (s_i r_i^T) restricted to the unmasked columns.
Prefix masks of different lengths give the members different effective
widths, so a single layer stack trains an ensemble over widths at roughly the
cost (and parameter count) of its widest member.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import ConfigError, ShapeError, StateError
from .linalg import Matrix
from .nn import Activation, DenseLayer, init_weight
from .rng import Rng


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class WidthPlan:
    """Per-member encoder widths derived from a decay-rate grid.

    widths[i][j] is member i's width after encoder layer j (j=0 is the input
    dimension); the physical (shared) width at depth j is the max over
    members, i.e. the width of the slowest-shrinking member.
    """

    input_dim: int
    n_layers: int
    decays: tuple
    widths: tuple  # K tuples of length n_layers+1
    physical: tuple  # length n_layers+1

    @property
    def n_members(self) -> int:
        return len(self.decays)

    def masks(self, depth: int) -> np.ndarray:
        """(K, physical[depth]) 0/1 matrix; member i's first widths[i][depth]
        columns are active."""
        width = self.physical[depth]
        out = np.zeros((self.n_members, width))
        for i in range(self.n_members):
            out[i, : self.widths[i][depth]] = 1.0
        return out


def plan_widths(input_dim: int, n_layers: int, decay_grid) -> WidthPlan:
    """Apply the geometric shrink widths[i][j] = max(1, round(prev / decay_i)).

    Rounding is half-away-from-zero. n_layers == 0 yields a plan holding only
    the input dimension.
    """
    decays = tuple(float(d) for d in decay_grid)
    if input_dim < 1:
        raise ConfigError(f"input_dim must be >= 1, got {input_dim}")
    if n_layers < 0:
        raise ConfigError(f"layer count must be >= 0, got {n_layers}")
    if not decays:
        raise ConfigError("decay grid is empty")
    for d in decays:
        if not d > 1.0:
            raise ConfigError(f"decay rates must be > 1, got {d}")
    widths = []
    for d in decays:
        w = [input_dim]
        for _ in range(n_layers):
            w.append(max(1, _round_half_away(w[-1] / d)))
        widths.append(tuple(w))
    physical = tuple(max(w[j] for w in widths) for j in range(n_layers + 1))
    return WidthPlan(input_dim, n_layers, decays, tuple(widths), physical)


class BECache:
    """Per-application forward cache (a layer can be applied many times per
    step; each application carries its own cache)."""

    __slots__ = ("x", "xs", "y", "out", "act")

    def __init__(self, x, xs, y, out, act):
        self.x = x
        self.xs = xs
        self.y = y
        self.out = out
        self.act = act


class BELayer:
    """Shared weight + K rank-1 factor pairs + fixed width masks + biases."""

    def __init__(self, fan_in: int, fan_out: int, n_members: int,
                 rng: Rng, mask: np.ndarray | None = None):
        if fan_in < 1 or fan_out < 1:
            raise ConfigError(f"layer dims must be >= 1, got {fan_in}x{fan_out}")
        if n_members < 1:
            raise ConfigError(f"member count must be >= 1, got {n_members}")
        self.fan_in = fan_in
        self.fan_out = fan_out
        self.n_members = n_members
        if mask is None:
            mask = np.ones((n_members, fan_out))
        mask = np.ascontiguousarray(mask, dtype=np.float64)
        if mask.shape != (n_members, fan_out):
            raise ShapeError(
                f"mask shape {mask.shape} != ({n_members}, {fan_out})")
        if not np.all((mask == 0.0) | (mask == 1.0)):
            raise ConfigError("mask entries must be exactly 0 or 1")
        self.mask = mask
        self.mask.setflags(write=False)
        # draw order: shared weight, then input factors, then output factors
        self.weight = init_weight(fan_in, fan_out, rng)
        self.s = rng.signs(n_members * fan_in).reshape(n_members, fan_in)
        self.r = rng.signs(n_members * fan_out).reshape(n_members, fan_out)
        self.bias = np.zeros((n_members, fan_out))
        self._cache: BECache | None = None

    @property
    def member_widths(self) -> np.ndarray:
        return self.mask.sum(axis=1).astype(int)

    def params(self) -> list[np.ndarray]:
        """Trainable tensors in a fixed order: weight, s, r, bias."""
        return [self.weight, self.s, self.r, self.bias]

    def decay_flags(self) -> list[bool]:
        """Weight decay applies to the shared weight only."""
        return [True, False, False, False]

    def param_count(self) -> int:
        return (self.fan_in * self.fan_out
                + self.n_members * (self.fan_in + self.fan_out)
                + self.n_members * self.fan_out)


def _check_blocks(layer: BELayer, x_blocks: np.ndarray) -> np.ndarray:
    x_blocks = np.ascontiguousarray(x_blocks, dtype=np.float64)
    if x_blocks.ndim != 3:
        raise ShapeError(
            f"expected (K, batch, fan_in) blocks, got ndim={x_blocks.ndim}")
    if x_blocks.shape[0] != layer.n_members:
        raise ShapeError(
            f"{x_blocks.shape[0]} blocks for a {layer.n_members}-member layer")
    if x_blocks.shape[2] != layer.fan_in:
        raise ShapeError(
            f"blocks have {x_blocks.shape[2]} columns, layer expects "
            f"{layer.fan_in}")
    return x_blocks


def be_apply(layer: BELayer, x_blocks: np.ndarray, act: Activation):
    """Forward pass; returns (out_blocks, cache). Pure given its inputs."""
    x_blocks = _check_blocks(layer, x_blocks)
    if not act.zero_preserving and np.any(layer.mask == 0.0):
        raise ConfigError(
            f"activation {act.kind!r} does not map 0 to 0 and cannot be used "
            "on a width-masked layer")
    k, b, m = x_blocks.shape
    x2 = x_blocks.reshape(k * b, m)
    r_eff = np.ascontiguousarray(layer.r * layer.mask)
    b_eff = np.ascontiguousarray(layer.bias * layer.mask)
    out2, xs2, y2 = backend.be_forward(
        x2, layer.weight, layer.s, r_eff, b_eff, k, act.code, act.slope)
    cache = BECache(x2, xs2, y2, out2, act)
    return out2.reshape(k, b, layer.fan_out), cache


def be_grads(layer: BELayer, cache: BECache, gout_blocks: np.ndarray):
    """Backward pass against an explicit cache.

    Returns (gx_blocks, grads) with grads = {"weight", "s", "r", "bias"}.
    The shared-weight gradient already accumulates all K members'
    contributions; masked positions of r/bias gradients are exactly zero.
    """
    k = layer.n_members
    gout_blocks = np.ascontiguousarray(gout_blocks, dtype=np.float64)
    if gout_blocks.shape != (k, cache.out.shape[0] // k, layer.fan_out):
        raise ShapeError(
            f"upstream blocks {gout_blocks.shape} do not match forward output")
    g2 = gout_blocks.reshape(cache.out.shape)
    r_eff = np.ascontiguousarray(layer.r * layer.mask)
    gx2, gw, gs, gr, gb = backend.be_backward(
        g2, cache.out, cache.y, cache.xs, cache.x, layer.weight,
        layer.s, r_eff, layer.mask, k, cache.act.code, cache.act.slope)
    gx = gx2.reshape(k, -1, layer.fan_in)
    return gx, {"weight": gw, "s": gs, "r": gr, "bias": gb}


def be_forward(layer: BELayer, x_blocks: np.ndarray, act: Activation) -> np.ndarray:
    """Stateful forward: caches for a following be_backward call."""
    out, cache = be_apply(layer, x_blocks, act)
    layer._cache = cache
    return out


def be_backward(layer: BELayer, gout_blocks: np.ndarray):
    """Backward against the last be_forward call on this layer."""
    if layer._cache is None:
        raise StateError("be_backward called before be_forward")
    return be_grads(layer, layer._cache, gout_blocks)


def extract_member(layer: BELayer, i: int, in_width: int | None = None) -> DenseLayer:
    """Standalone dense layer equal to member i's slice of the ensemble.

    The dense weight is W * (s_i r_i^T) with masked output columns removed
    (fan_out = the member's effective width). in_width optionally restricts
    the input side too, for assembling narrow sub-networks whose previous
    layer was itself masked to in_width columns.
    """
    if not 0 <= i < layer.n_members:
        raise IndexError(
            f"member index {i} out of range for {layer.n_members} members")
    w_eff = int(layer.mask[i].sum())
    rows = layer.fan_in if in_width is None else in_width
    if not 0 < rows <= layer.fan_in:
        raise ShapeError(f"in_width {rows} not in 1..{layer.fan_in}")
    dense_w = (layer.weight * np.outer(layer.s[i], layer.r[i]))[:rows, :w_eff]
    dense_b = layer.bias[i, :w_eff]
    return DenseLayer(rows, w_eff, weight=dense_w, bias=dense_b)


def dense_ensemble_param_count(layer: BELayer) -> int:
    """Parameters K independent dense layers of the members' widths would
    need (weights + biases), for the storage-saving comparison."""
    total = 0
    for w in layer.member_widths:
        total += layer.fan_in * int(w) + int(w)
    return total
