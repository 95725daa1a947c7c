"""Skip-connection autoencoder over shared-weight ensemble layers.

The model holds L encoder layers E_1..E_L and L decoder layers D_L..D_1 of
mirrored dimensions. The depth-d sub-path runs E_1..E_d then D_d..D_1, so the
outermost pairs are shared by every deeper path; training minimizes the sum
over depths of per-path reconstruction error, which trains an ensemble over
depths in one pass. Combined with the width masks inside each layer this
yields K x L member autoencoders (K widths times L depths) from one stack.

Per-point scores and the training loss both come from the same per-path
squared errors:

    member_score_i(x) = sum over depths d of ||x - recon_{i,d}(x)||^2
    loss = mean over samples and members of that depth-sum

Forward cost note: encoder layers run once per pass; decoder layer D_e runs
(L - e + 1) times (once per path of depth >= e).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .batchens import (BELayer, WidthPlan, be_apply, be_grads, extract_member,
                       plan_widths)
from .errors import ConfigError, ShapeError
from .linalg import Matrix, as_matrix
from .nn import (Activation, AdamState, DenseLayer, IDENTITY, LEAKY_RELU,
                 SIGMOID, adam_step)
from .rng import Rng

_SNAP_MAGIC = b"AESNAP01"


@dataclass
class PathErrors:
    """Squared reconstruction errors per (member, path, point).

    errors has shape (K, P, n) where P is the number of depth paths the
    model evaluates (L, or 1 in deepest-only mode).
    """

    errors: np.ndarray
    depths: tuple  # the depth value of each path axis entry

    @property
    def n_members(self) -> int:
        return self.errors.shape[0]

    @property
    def n_points(self) -> int:
        return self.errors.shape[2]

    def member_sums(self) -> np.ndarray:
        """(K, n) matrix of per-member depth-summed scores."""
        return self.errors.sum(axis=1)


def aes_loss(path_errors: PathErrors) -> float:
    """Mean over samples and members of the per-sample depth-summed error."""
    e = path_errors.errors
    return float(e.sum(axis=1).mean())


def member_score(path_errors: PathErrors, i: int, x_index: int) -> float:
    """Sum over depths of member i's squared error at one point."""
    e = path_errors.errors
    if not 0 <= i < e.shape[0]:
        raise IndexError(f"member {i} out of range for {e.shape[0]} members")
    if not 0 <= x_index < e.shape[2]:
        raise IndexError(f"point {x_index} out of range for {e.shape[2]} points")
    return float(e[i, :, x_index].sum())


class AESModel:
    """L encoder + L decoder shared-weight layers with a common width plan.

    paths: "all" evaluates and trains every depth 1..L (the depth ensemble);
    "deepest" uses only the full-depth path, which is exactly a single plain
    autoencoder and is how the independent baseline reuses this machinery.
    """

    def __init__(self, plan: WidthPlan, rng: Rng, paths: str = "all",
                 output_sigmoid: bool = True,
                 hidden_act: Activation = LEAKY_RELU):
        if plan.n_layers < 1:
            raise ConfigError("model needs at least one encoder layer")
        if paths not in ("all", "deepest"):
            raise ConfigError(f"paths must be 'all' or 'deepest', got {paths!r}")
        if not hidden_act.zero_preserving:
            raise ConfigError("hidden activation must map 0 to 0")
        self.plan = plan
        self.n_members = plan.n_members
        self.n_layers = plan.n_layers
        self.paths = paths
        self.output_sigmoid = bool(output_sigmoid)
        self.hidden_act = hidden_act
        self.output_act = SIGMOID if output_sigmoid else IDENTITY
        phys = plan.physical
        L = plan.n_layers
        # init draw order: E_1..E_L, then D_L..D_1
        self.enc = [
            BELayer(phys[j], phys[j + 1], plan.n_members, rng,
                    mask=plan.masks(j + 1))
            for j in range(L)
        ]
        dec_rev = [
            BELayer(phys[j + 1], phys[j], plan.n_members, rng,
                    mask=plan.masks(j))
            for j in reversed(range(L))
        ]
        self.dec = dec_rev[::-1]  # dec[0] is the output layer D_1

    @property
    def input_dim(self) -> int:
        return self.plan.input_dim

    @property
    def depth_list(self) -> list[int]:
        if self.paths == "deepest":
            return [self.n_layers]
        return list(range(1, self.n_layers + 1))

    def all_layers(self) -> list[BELayer]:
        return list(self.enc) + list(self.dec)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.all_layers():
            out.extend(layer.params())
        return out

    def decay_flags(self) -> list[bool]:
        out = []
        for layer in self.all_layers():
            out.extend(layer.decay_flags())
        return out

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.all_layers())


def independent_members_param_count(model: AESModel) -> int:
    """Parameters needed to store every member as its own dense network
    (the storage the shared-weight construction avoids)."""
    total = 0
    plan = model.plan
    L = plan.n_layers
    for widths in plan.widths:
        for j in range(L):
            total += widths[j] * widths[j + 1] + widths[j + 1]  # encoder
            total += widths[j + 1] * widths[j] + widths[j]      # decoder
    return total


def _check_input_blocks(model: AESModel, x_blocks) -> np.ndarray:
    x_blocks = np.ascontiguousarray(x_blocks, dtype=np.float64)
    if x_blocks.ndim != 3:
        raise ShapeError(
            f"expected (K, batch, input_dim) blocks, got ndim={x_blocks.ndim}")
    k, _, m = x_blocks.shape
    if k != model.n_members:
        raise ShapeError(
            f"{k} blocks for a {model.n_members}-member model")
    if m != model.input_dim:
        raise ShapeError(
            f"blocks have {m} columns, model expects {model.input_dim}")
    return x_blocks


def _block_sqerr(target_blocks: np.ndarray, recon_blocks: np.ndarray) -> np.ndarray:
    """(K, b) squared L2 errors between matching rows of two block stacks."""
    k, b, m = target_blocks.shape
    t2 = np.ascontiguousarray(target_blocks.reshape(k * b, m))
    r2 = np.ascontiguousarray(recon_blocks.reshape(k * b, m))
    return backend.rowwise_sqerr(t2, r2).reshape(k, b)


def aes_forward_all_depths(model: AESModel, x_blocks):
    """Evaluation-mode forward of every depth path.

    Returns (recons, path_errors): recons is a list over paths of
    (K, b, input_dim) reconstructions; path_errors holds the squared error
    of each member/path against its own input block. No dropout, no RNG.
    """
    x_blocks = _check_input_blocks(model, x_blocks)
    h = x_blocks
    enc_outs = []
    for layer in model.enc:
        h, _ = be_apply(layer, h, model.hidden_act)
        enc_outs.append(h)
    recons = []
    for d in model.depth_list:
        z = enc_outs[d - 1]
        for e in range(d, 1, -1):
            z, _ = be_apply(model.dec[e - 1], z, model.hidden_act)
        recon, _ = be_apply(model.dec[0], z, model.output_act)
        recons.append(recon)
    errs = np.stack([_block_sqerr(x_blocks, r) for r in recons], axis=1)
    return recons, PathErrors(errs, tuple(model.depth_list))


def score_path_errors(model: AESModel, x: Matrix) -> PathErrors:
    """PathErrors of every point in x under every member (x replicated to
    all members). This is the scoring entry point."""
    x = as_matrix(x, "x")
    blocks = np.ascontiguousarray(
        np.broadcast_to(x, (model.n_members,) + x.shape))
    _, pe = aes_forward_all_depths(model, blocks)
    return pe


class _GradAccum:
    """Per-layer gradient buffers, reused across steps."""

    _NAMES = ("weight", "s", "r", "bias")

    def __init__(self, model: AESModel):
        self.layers = model.all_layers()
        self.grads = []
        self.base = {}
        for layer in self.layers:
            self.base[id(layer)] = len(self.grads)
            self.grads.extend(np.zeros_like(p) for p in layer.params())

    def zero(self):
        for g in self.grads:
            g.fill(0.0)

    def add(self, layer: BELayer, grads: dict):
        base = self.base[id(layer)]
        for off, name in enumerate(self._NAMES):
            self.grads[base + off] += grads[name]


def _dropout_blocks(out, rate, rng):
    """Draw and apply an inverted-dropout mask to a (K, b, w) tensor."""
    k, b, w = out.shape
    flat = out.reshape(k * b, w)
    u = rng.uniform(0.0, 1.0, flat.size).reshape(flat.shape)
    dropped, scale = backend.dropout_mask_apply(
        np.ascontiguousarray(flat), u, rate)
    return dropped.reshape(out.shape), scale.reshape(out.shape)


def _train_step(model: AESModel, blocks: np.ndarray, dropout_rate: float,
                rng: Rng, accum: _GradAccum) -> float:
    """One forward/backward over a block stack; gradients land in accum.

    Dropout draw order is fixed (encoder layers 1..L, then each path's
    hidden decoder applications in path order) so runs are reproducible.
    """
    k, b, m = blocks.shape
    denom = float(k * b)
    hidden = model.hidden_act
    enc_caches = []
    enc_scales = []
    enc_outs = []
    h = blocks
    for layer in model.enc:
        out, cache = be_apply(layer, h, hidden)
        scale = None
        if dropout_rate > 0.0:
            out, scale = _dropout_blocks(out, dropout_rate, rng)
        enc_caches.append(cache)
        enc_scales.append(scale)
        enc_outs.append(out)
        h = out
    path_steps = []  # per path: list of (dec index, cache, output drop scale)
    recons = []
    for d in model.depth_list:
        z = enc_outs[d - 1]
        steps = []
        for e in range(d, 1, -1):
            out, cache = be_apply(model.dec[e - 1], z, hidden)
            scale = None
            if dropout_rate > 0.0:
                out, scale = _dropout_blocks(out, dropout_rate, rng)
            steps.append((e - 1, cache, scale))
            z = out
        recon, cache1 = be_apply(model.dec[0], z, model.output_act)
        steps.append((0, cache1, None))
        path_steps.append(steps)
        recons.append(recon)

    loss = 0.0
    buckets = [None] * model.n_layers  # grads w.r.t. enc_outs[j]
    for d, steps, recon in zip(model.depth_list, path_steps, recons):
        diff = recon - blocks
        loss += float((diff * diff).sum()) / denom
        g = (2.0 / denom) * diff
        for li, cache, out_scale in reversed(steps):
            if out_scale is not None:
                g = g * out_scale
            g, grads = be_grads(model.dec[li], cache, g)
            accum.add(model.dec[li], grads)
        j = d - 1
        buckets[j] = g if buckets[j] is None else buckets[j] + g
    g = None
    for j in reversed(range(model.n_layers)):
        total = buckets[j]
        if g is not None:
            total = g if total is None else total + g
        if total is None:
            continue
        if enc_scales[j] is not None:
            total = total * enc_scales[j]
        g, grads = be_grads(model.enc[j], enc_caches[j], total)
        accum.add(model.enc[j], grads)
    return loss


@dataclass
class EvalSnapshot:
    """Frozen full-data evaluation recorded mid-training."""

    epoch: int
    path_errors: PathErrors
    eval_loss: float


@dataclass
class TrainResult:
    model: AESModel
    snapshots: dict = field(default_factory=dict)  # epoch -> EvalSnapshot
    epoch_losses: list = field(default_factory=list)


def aes_train(model: AESModel, data: Matrix, epochs: int, lr: float,
              weight_decay: float = 0.0, dropout: float = 0.0,
              batch_size: int = 128, rng: Rng | None = None,
              member_indices=None, snapshot_epochs=None) -> TrainResult:
    """Adam-train the model; record frozen full-data evaluations at the
    requested snapshot epochs.

    member_indices, when given, is a list of K equally sized index arrays;
    member i's mini-batches are drawn from its own subset only. RNG use per
    epoch is: K shuffles (member order), then the per-step dropout draws, so
    a run's prefix is bit-identical to a shorter run with the same seed and
    snapshots commute with continued training.
    """
    data = as_matrix(data, "data")
    if rng is None:
        raise ConfigError("aes_train requires an rng")
    if epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {epochs}")
    if not 0.0 <= dropout < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {dropout}")
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    n = data.shape[0]
    k = model.n_members
    if member_indices is None:
        member_indices = [np.arange(n)] * k
    else:
        if len(member_indices) != k:
            raise ConfigError(
                f"{len(member_indices)} member index sets for {k} members")
        member_indices = [np.asarray(ix, dtype=np.intp) for ix in member_indices]
        sizes = {ix.size for ix in member_indices}
        if 0 in sizes:
            raise ConfigError("a member's training subset is empty")
        if len(sizes) != 1:
            raise ConfigError(
                f"member subsets must have equal sizes, got {sorted(sizes)}")
        for ix in member_indices:
            if ix.size and (ix.min() < 0 or ix.max() >= n):
                raise ConfigError("member subset index out of range")
    snapshot_set = set(int(e) for e in (snapshot_epochs or []))
    bad = [e for e in snapshot_set if not 1 <= e <= epochs]
    if bad:
        raise ConfigError(
            f"snapshot epochs {sorted(bad)} outside 1..{epochs}")

    n_sub = member_indices[0].size
    bsz = min(batch_size, n_sub)
    adam = AdamState(lr=lr, weight_decay=weight_decay)
    accum = _GradAccum(model)
    params = model.parameters()
    flags = model.decay_flags()
    result = TrainResult(model)
    for epoch in range(1, epochs + 1):
        perms = [ix[rng.permutation(n_sub)] for ix in member_indices]
        epoch_loss = 0.0
        rows = 0
        for start in range(0, n_sub, bsz):
            blocks = np.stack([data[p[start:start + bsz]] for p in perms])
            accum.zero()
            step_loss = _train_step(model, blocks, dropout, rng, accum)
            adam_step(adam, params, accum.grads, flags)
            b = blocks.shape[1]
            epoch_loss += step_loss * b
            rows += b
        result.epoch_losses.append(epoch_loss / rows)
        if epoch in snapshot_set:
            pe = score_path_errors(model, data)
            result.snapshots[epoch] = EvalSnapshot(epoch, pe, aes_loss(pe))
    return result


def extract_path_network(model: AESModel, i: int, depth: int) -> list[tuple[DenseLayer, Activation]]:
    """Member i's depth-d sub-network as standalone dense layers.

    Returns [(layer, activation), ...] in application order; running them in
    sequence on raw input reproduces that member/path reconstruction (up to
    the masked zero columns the dense layers simply omit).
    """
    if not 1 <= depth <= model.n_layers:
        raise IndexError(f"depth {depth} out of range 1..{model.n_layers}")
    widths = model.plan.widths[i]
    net = []
    for j in range(depth):
        dense = extract_member(model.enc[j], i, in_width=widths[j])
        net.append((dense, model.hidden_act))
    for e in range(depth, 1, -1):
        dense = extract_member(model.dec[e - 1], i, in_width=widths[e])
        net.append((dense, model.hidden_act))
    dense = extract_member(model.dec[0], i, in_width=widths[1])
    net.append((dense, model.output_act))
    return net


def run_dense_network(net, x: Matrix) -> Matrix:
    h = as_matrix(x, "x")
    for layer, act in net:
        h = layer.forward(h, act)
    return h


def _tensor_entries(model: AESModel):
    for j, layer in enumerate(model.enc):
        for name, arr in zip(("weight", "s", "r", "bias"), layer.params()):
            yield f"enc{j}.{name}", arr
    for j, layer in enumerate(model.dec):
        for name, arr in zip(("weight", "s", "r", "bias"), layer.params()):
            yield f"dec{j}.{name}", arr


def save_model(model: AESModel, path, extra: dict | None = None) -> None:
    """Serialize to the documented snapshot format.

    Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON
    header, then the raw little-endian float64 tensor payloads in header
    order. Width masks are not stored; they are a pure function of the plan.
    """
    tensors = list(_tensor_entries(model))
    header = {
        "format": "aes-snapshot-v1",
        "input_dim": model.input_dim,
        "n_layers": model.n_layers,
        "n_members": model.n_members,
        "decays": list(model.plan.decays),
        "paths": model.paths,
        "output_sigmoid": model.output_sigmoid,
        "hidden_kind": model.hidden_act.kind,
        "hidden_slope": model.hidden_act.slope,
        "tensors": [{"name": name, "shape": list(arr.shape)}
                    for name, arr in tensors],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_SNAP_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path):
    """Inverse of save_model; returns (model, extra)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _SNAP_MAGIC:
            raise ConfigError(f"{path}: not a model snapshot (bad magic)")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("format") != "aes-snapshot-v1":
            raise ConfigError(
                f"{path}: unsupported snapshot format {header.get('format')!r}")
        plan = plan_widths(header["input_dim"], header["n_layers"],
                           header["decays"])
        model = AESModel(
            plan, Rng(0), paths=header["paths"],
            output_sigmoid=header["output_sigmoid"],
            hidden_act=Activation(header["hidden_kind"], header["hidden_slope"]),
        )
        tensors = list(_tensor_entries(model))
        if len(tensors) != len(header["tensors"]):
            raise ConfigError(f"{path}: tensor count mismatch")
        for (name, arr), spec_entry in zip(tensors, header["tensors"]):
            if name != spec_entry["name"] or list(arr.shape) != spec_entry["shape"]:
                raise ConfigError(
                    f"{path}: tensor {spec_entry['name']} does not match "
                    f"model layout ({name}, {list(arr.shape)})")
            raw = fh.read(arr.size * 8)
            if len(raw) != arr.size * 8:
                raise ConfigError(f"{path}: truncated payload at {name}")
            arr[...] = np.frombuffer(raw, dtype="<f8").reshape(arr.shape)
    return model, header.get("extra", {})
