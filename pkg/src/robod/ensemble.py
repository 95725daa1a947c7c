"""Hyper-ensemble orchestration.

A hyper-ensemble averages outlier scores over a grid of hyperparameter
configurations instead of picking one. Three flavors live here:

  - robod_score: one shared-parameter model per config covers K widths x L
    depths in a single training run; scores average over (K, L, B).
  - robod_subsampled_score: members train on per-member subsamples and every
    point is scored only by members that did not train on it.
  - irobod_score: the independent baseline, one plain autoencoder trained
    per config, scores averaged over configs.

plus the generic sensitivity sweep harness (per-config scores, losses,
AUROCs, summaries) shared by the baselines.

Two reproducibility rules apply throughout. Every training run's seed is
derived from (base seed, canonical hash of the config values excluding
epochs), so identical configs get identical streams regardless of grid
position. And the epochs grid never retrains: configs that differ only in
epochs share one run to the largest value, with frozen full-data evaluations
snapshotted at each requested epoch; prefix determinism of the trainer makes
this exactly equal to separate shorter runs.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass

import numpy as np

from .aes import AESModel, aes_train
from .batchens import plan_widths
from .dataio import Dataset
from .errors import ConfigError, MetricError
from .evalkit import SweepSummary, auroc_of, summarize
from .linalg import Matrix, as_matrix
from .rng import Rng, derive_seed

DEFAULT_DECAYS = (1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0, 3.25)

# epochs x lr x dropout x weight decay; the 16-config shared-model grid
DEFAULT_SHARED_GRID = {
    "epochs": [250, 500],
    "lr": [1e-3, 1e-4],
    "dropout": [0.0, 0.2],
    "weight_decay": [0.0, 1e-5],
}

# adds architecture dimensions for independently trained autoencoders
DEFAULT_INDEPENDENT_GRID = {
    "n_layers": [2, 3, 4, 5, 6],
    "layer_decay": list(DEFAULT_DECAYS),
    "epochs": [250, 500],
    "lr": [1e-3, 1e-4],
    "dropout": [0.0, 0.2],
    "weight_decay": [0.0, 1e-5],
}

DEFAULT_IFOREST_GRID = {
    "n_trees": [50, 100, 200, 500],
    "subsample": [64, 128, 256, 512],
}


class HpGrid:
    """Ordered map from hyperparameter name to its value list."""

    def __init__(self, values: dict):
        if not values:
            raise ConfigError("grid has no hyperparameters")
        self._values = {}
        for name, vals in values.items():
            vals = list(vals)
            if not vals:
                raise ConfigError(f"grid value list for {name!r} is empty")
            self._values[str(name)] = vals

    @property
    def names(self) -> list[str]:
        return list(self._values)

    def values(self, name: str) -> list:
        return list(self._values[name])

    def __contains__(self, name) -> bool:
        return name in self._values

    @property
    def size(self) -> int:
        b = 1
        for vals in self._values.values():
            b *= len(vals)
        return b

    def as_dict(self) -> dict:
        return {k: list(v) for k, v in self._values.items()}


@dataclass(frozen=True)
class HpConfig:
    """One point of the grid; index is its position in expansion order."""

    values: dict
    index: int

    def get(self, name, default=None):
        return self.values.get(name, default)


def expand_grid(grid: HpGrid) -> list[HpConfig]:
    """Cartesian product in key order, rightmost dimension fastest."""
    if not isinstance(grid, HpGrid):
        grid = HpGrid(grid)
    names = grid.names
    configs = [{}]
    for name in names:
        configs = [dict(c, **{name: v}) for c in configs
                   for v in grid.values(name)]
    return [HpConfig(values=c, index=i) for i, c in enumerate(configs)]


def _canon_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return repr(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return repr(str(v))


def config_key(values: dict, exclude=()) -> str:
    """Canonical order-independent string for a config's values."""
    parts = [f"{k}={_canon_value(v)}" for k, v in sorted(values.items())
             if k not in exclude]
    return ";".join(parts)


def config_token(values: dict, exclude=()) -> int:
    """Stable 64-bit hash of a config's values (content, not position)."""
    digest = hashlib.sha256(config_key(values, exclude).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def run_seed_for(base_seed: int, values: dict) -> int:
    """Seed of the training run that serves this config.

    Derived from the config's values with epochs excluded: configs that
    differ only in epochs share one run (snapshot folding), and duplicate
    configs get identical streams wherever they appear in the grid.
    """
    return derive_seed(base_seed, config_token(values, exclude=("epochs",)))


@dataclass
class FoldGroup:
    """Configs identical up to their epochs value; share one training run."""

    shared_values: dict  # all values except epochs
    members: list  # [(HpConfig, epochs)] sorted by epochs

    @property
    def epochs_list(self) -> list[int]:
        return [e for _, e in self.members]

    @property
    def max_epochs(self) -> int:
        return self.members[-1][1]


def fold_epoch_groups(configs) -> list[FoldGroup]:
    groups = {}
    order = []
    for cfg in configs:
        if "epochs" not in cfg.values:
            raise ConfigError("grid must include an 'epochs' dimension")
        epochs = int(cfg.values["epochs"])
        if epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {epochs}")
        key = config_key(cfg.values, exclude=("epochs",))
        if key not in groups:
            shared = {k: v for k, v in cfg.values.items() if k != "epochs"}
            groups[key] = FoldGroup(shared_values=shared, members=[])
            order.append(key)
        groups[key].members.append((cfg, epochs))
    for key in order:
        groups[key].members.sort(key=lambda item: item[1])
    return [groups[key] for key in order]


@dataclass
class SubsamplePlan:
    """Per-member in-sample index sets and their complements."""

    n: int
    delta: float
    in_sets: list  # K sorted index arrays, each of size ceil(delta * n)

    @property
    def n_members(self) -> int:
        return len(self.in_sets)

    def out_mask(self) -> np.ndarray:
        """(K, n) boolean: True where the point is out-of-sample for the
        member (eligible to score it)."""
        mask = np.ones((self.n_members, self.n), dtype=bool)
        for i, idx in enumerate(self.in_sets):
            mask[i, idx] = False
        return mask

    def in_mask(self) -> np.ndarray:
        return ~self.out_mask()


def make_subsample_plan(n: int, n_members: int, delta: float, rng: Rng) -> SubsamplePlan:
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"sampling rate must be in (0, 1), got {delta}")
    size = int(math.ceil(delta * n))
    if size < 1:
        raise ConfigError(f"subsample of {n} points at rate {delta} is empty")
    in_sets = [rng.choice_no_replace(n, size) for _ in range(n_members)]
    return SubsamplePlan(n=n, delta=delta, in_sets=in_sets)


@dataclass
class ScoreTable:
    """Per-point member scores per config, plus the aggregated score."""

    per_member: np.ndarray  # (B, K, n): member i's depth-summed score
    final: np.ndarray  # (n,)
    configs: list  # HpConfig per table row


def _ordered_mean(rows: np.ndarray, configs) -> np.ndarray:
    """Mean over configs, accumulated in canonical-key order.

    Per-config values already depend only on their own run (content-derived
    seeds), so summing in a content-determined order makes the final scores
    bitwise invariant to how the grid was ordered.
    """
    keys = [config_key(cfg.values) for cfg in configs]
    acc = np.zeros(rows.shape[1])
    for i in sorted(range(len(keys)), key=keys.__getitem__):
        acc += rows[i]
    return acc / len(keys)


def _features(data) -> Matrix:
    if isinstance(data, Dataset):
        return data.features
    return as_matrix(data, "data")


@dataclass
class _GroupOutcome:
    member_sums: dict  # epochs -> (K, n)
    losses: dict  # epochs -> float
    seconds: float
    seed: int
    plan: SubsamplePlan | None
    model: AESModel | None


def _run_shared_group(x, decays, n_layers, group: FoldGroup, base_seed: int,
                      delta, batch_size, output_sigmoid, paths,
                      keep_model=False) -> _GroupOutcome:
    """Train one shared model for a fold group; snapshot each epochs value."""
    values = group.shared_values
    lr = float(values["lr"])
    dropout = float(values.get("dropout", 0.0))
    weight_decay = float(values.get("weight_decay", 0.0))
    seed = run_seed_for(base_seed, values)
    rng = Rng(seed)
    plan = plan_widths(x.shape[1], n_layers, decays)
    model = AESModel(plan, rng, paths=paths, output_sigmoid=output_sigmoid)
    sub_plan = None
    member_indices = None
    if delta is not None:
        sub_plan = make_subsample_plan(x.shape[0], plan.n_members, delta, rng)
        member_indices = sub_plan.in_sets
    started = time.perf_counter()
    result = aes_train(
        model, x, epochs=group.max_epochs, lr=lr,
        weight_decay=weight_decay, dropout=dropout, batch_size=batch_size,
        rng=rng, member_indices=member_indices,
        snapshot_epochs=sorted(set(group.epochs_list)),
    )
    seconds = time.perf_counter() - started
    member_sums = {}
    losses = {}
    for epochs in set(group.epochs_list):
        snap = result.snapshots[epochs]
        member_sums[epochs] = snap.path_errors.member_sums()
        losses[epochs] = snap.eval_loss
    return _GroupOutcome(member_sums, losses, seconds, seed, sub_plan,
                         model if keep_model else None)


def _require(grid_names, needed, forbidden=()):
    for name in needed:
        if name not in grid_names:
            raise ConfigError(f"grid must include a {name!r} dimension")
    for name in forbidden:
        if name in grid_names:
            raise ConfigError(
                f"grid must not include {name!r}; that dimension is part of "
                "the shared model, not the config grid")


@dataclass
class RobodResult:
    table: ScoreTable
    final: np.ndarray  # (n,)
    losses: np.ndarray  # (B,)
    seconds: np.ndarray  # (B,) group time split evenly over its configs
    run_seeds: np.ndarray  # (B,) uint64
    n_depths: int
    group_models: list  # [(shared_values, model)] when keep_models is set

    @property
    def total_seconds(self) -> float:
        return float(self.seconds.sum())


def robod_score(data, decays, n_layers: int, grid, seed: int,
                batch_size: int = 128, output_sigmoid: bool = True,
                keep_models: bool = False, _delta=None,
                _paths="all") -> RobodResult:
    """Hyper-ensemble scores of the shared-parameter model over a grid.

    Per config, each point's score is the mean over the K x L member
    autoencoders of its depth-summed squared reconstruction error; the final
    score is the mean over the B configs. Width/depth live in (decays,
    n_layers), never in the grid.
    """
    x = _features(data)
    if not isinstance(grid, HpGrid):
        grid = HpGrid(grid)
    _require(grid.names, ("epochs", "lr"), ("n_layers", "layer_decay"))
    configs = expand_grid(grid)
    groups = fold_epoch_groups(configs)
    n = x.shape[0]
    k = len(tuple(decays))
    b_total = len(configs)
    per_member = np.zeros((b_total, k, n))
    losses = np.zeros(b_total)
    seconds = np.zeros(b_total)
    run_seeds = np.zeros(b_total, dtype=np.uint64)
    plans = [None] * b_total
    group_models = []
    for group in groups:
        outcome = _run_shared_group(
            x, decays, n_layers, group, seed, _delta, batch_size,
            output_sigmoid, _paths, keep_model=keep_models)
        if keep_models:
            group_models.append((group.shared_values, outcome.model))
        share = outcome.seconds / len(group.members)
        for cfg, epochs in group.members:
            per_member[cfg.index] = outcome.member_sums[epochs]
            losses[cfg.index] = outcome.losses[epochs]
            seconds[cfg.index] = share
            run_seeds[cfg.index] = outcome.seed
            plans[cfg.index] = outcome.plan
    n_depths = n_layers if _paths == "all" else 1
    final = _ordered_mean(per_member.mean(axis=1) / n_depths, configs)
    result = RobodResult(
        table=ScoreTable(per_member=per_member, final=final,
                         configs=configs),
        final=final, losses=losses, seconds=seconds, run_seeds=run_seeds,
        n_depths=n_depths, group_models=group_models,
    )
    result._plans = plans
    return result


@dataclass
class SubsampledResult:
    table: ScoreTable
    final: np.ndarray
    losses: np.ndarray
    seconds: np.ndarray
    run_seeds: np.ndarray
    n_depths: int
    plans: list  # SubsamplePlan per config
    fallback_flags: np.ndarray  # (B, n) bool: K' == 0, in-sample average used
    contributions: np.ndarray  # (B, K, n) bool: member scored the point

    @property
    def total_seconds(self) -> float:
        return float(self.seconds.sum())

    @property
    def fallback_count(self) -> int:
        return int(self.fallback_flags.sum())


def robod_subsampled_score(data, decays, n_layers: int, grid, delta: float,
                           seed: int, batch_size: int = 128,
                           output_sigmoid: bool = True) -> SubsampledResult:
    """Subsampled variant: member i trains on its own in-sample set and each
    point is scored only by members that never saw it, normalized by K'.

    Points that every member trained on (K' = 0) fall back to the all-member
    average and are flagged; the expected fallback rate is ~delta^K.
    """
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"sampling rate must be in (0, 1), got {delta}")
    base = robod_score(data, decays, n_layers, grid, seed,
                       batch_size=batch_size, output_sigmoid=output_sigmoid,
                       _delta=delta)
    b_total, k, n = base.table.per_member.shape
    finals = np.zeros((b_total, n))
    flags = np.zeros((b_total, n), dtype=bool)
    contribs = np.zeros((b_total, k, n), dtype=bool)
    for bi in range(b_total):
        plan = base._plans[bi]
        ms = base.table.per_member[bi]  # (K, n)
        out = plan.out_mask()
        kprime = out.sum(axis=0)
        fb = kprime == 0
        with np.errstate(invalid="ignore", divide="ignore"):
            s = (ms * out).sum(axis=0) / (kprime * base.n_depths)
        if fb.any():
            s[fb] = ms[:, fb].mean(axis=0) / base.n_depths
        finals[bi] = s
        flags[bi] = fb
        contribs[bi] = out | (fb[None, :])  # fallback points use all members
    final = _ordered_mean(finals, base.table.configs)
    return SubsampledResult(
        table=base.table, final=final, losses=base.losses,
        seconds=base.seconds, run_seeds=base.run_seeds,
        n_depths=base.n_depths, plans=list(base._plans),
        fallback_flags=flags, contributions=contribs,
    )


def train_vanilla(x, n_layers: int, layer_decay: float, lr: float,
                  epochs_list, dropout: float, weight_decay: float,
                  seed: int, batch_size: int = 128,
                  output_sigmoid: bool = True):
    """Train one plain autoencoder; return {epochs: (scores, loss)}.

    The model is the deepest-only single-member case of the shared machinery
    (plan with one decay, full-depth path), so its float operations are
    identical to the degenerate shared-model run with the same seed.
    """
    x = _features(x)
    rng = Rng(seed)
    plan = plan_widths(x.shape[1], int(n_layers), [float(layer_decay)])
    model = AESModel(plan, rng, paths="deepest", output_sigmoid=output_sigmoid)
    epochs_list = sorted(set(int(e) for e in epochs_list))
    result = aes_train(
        model, x, epochs=epochs_list[-1], lr=float(lr),
        weight_decay=float(weight_decay), dropout=float(dropout),
        batch_size=batch_size, rng=rng, snapshot_epochs=epochs_list,
    )
    out = {}
    for epochs in epochs_list:
        snap = result.snapshots[epochs]
        out[epochs] = (snap.path_errors.member_sums()[0], snap.eval_loss)
    return out, model


@dataclass
class IndependentResult:
    final: np.ndarray  # (n,)
    per_config: np.ndarray  # (B, n)
    losses: np.ndarray
    seconds: np.ndarray
    run_seeds: np.ndarray
    configs: list
    group_models: list

    @property
    def total_seconds(self) -> float:
        return float(self.seconds.sum())


def irobod_score(data, grid, seed: int, batch_size: int = 128,
                 output_sigmoid: bool = True,
                 keep_models: bool = False) -> IndependentResult:
    """Independent-training hyper-ensemble: one standalone autoencoder per
    config (architecture dimensions included in the grid), final score =
    pointwise mean of reconstruction errors over all configs."""
    x = _features(data)
    if not isinstance(grid, HpGrid):
        grid = HpGrid(grid)
    _require(grid.names, ("epochs", "lr", "n_layers", "layer_decay"))
    configs = expand_grid(grid)
    groups = fold_epoch_groups(configs)
    n = x.shape[0]
    b_total = len(configs)
    per_config = np.zeros((b_total, n))
    losses = np.zeros(b_total)
    seconds = np.zeros(b_total)
    run_seeds = np.zeros(b_total, dtype=np.uint64)
    group_models = []
    for group in groups:
        values = group.shared_values
        run_seed = run_seed_for(seed, values)
        started = time.perf_counter()
        by_epoch, model = train_vanilla(
            x, values["n_layers"], values["layer_decay"], values["lr"],
            group.epochs_list, values.get("dropout", 0.0),
            values.get("weight_decay", 0.0), run_seed,
            batch_size=batch_size, output_sigmoid=output_sigmoid)
        share = (time.perf_counter() - started) / len(group.members)
        if keep_models:
            group_models.append((values, model))
        for cfg, epochs in group.members:
            scores, loss = by_epoch[epochs]
            per_config[cfg.index] = scores
            losses[cfg.index] = loss
            seconds[cfg.index] = share
            run_seeds[cfg.index] = run_seed
    return IndependentResult(
        final=_ordered_mean(per_config, configs), per_config=per_config,
        losses=losses, seconds=seconds, run_seeds=run_seeds, configs=configs,
        group_models=group_models,
    )


# ---------------------------------------------------------------------------
# sensitivity sweep harness


@dataclass
class ConfigRun:
    config: HpConfig
    scores: np.ndarray
    loss: float
    seconds: float
    seed: int


class VanillaAEDetector:
    """Sweep detector training one plain autoencoder per config."""

    name = "vanilla-ae"

    def __init__(self, batch_size: int = 128, output_sigmoid: bool = True):
        self.batch_size = batch_size
        self.output_sigmoid = output_sigmoid

    def required_dimensions(self):
        return ("epochs", "lr", "n_layers", "layer_decay")

    def run_configs(self, x, configs, base_seed: int):
        runs = {}
        for group in fold_epoch_groups(configs):
            values = group.shared_values
            run_seed = run_seed_for(base_seed, values)
            started = time.perf_counter()
            by_epoch, _ = train_vanilla(
                x, values["n_layers"], values["layer_decay"], values["lr"],
                group.epochs_list, values.get("dropout", 0.0),
                values.get("weight_decay", 0.0), run_seed,
                batch_size=self.batch_size,
                output_sigmoid=self.output_sigmoid)
            share = (time.perf_counter() - started) / len(group.members)
            for cfg, epochs in group.members:
                scores, loss = by_epoch[epochs]
                runs[cfg.index] = ConfigRun(cfg, scores, loss, share, run_seed)
        return [runs[cfg.index] for cfg in configs]


@dataclass
class SweepResult:
    configs: list
    seeds: list
    scores: np.ndarray  # (S, B, n)
    losses: np.ndarray  # (S, B)
    aurocs: np.ndarray  # (S, B), nan when labels unusable
    seconds: np.ndarray  # (S, B)
    summary: SweepSummary | None

    @property
    def total_seconds(self) -> float:
        return float(self.seconds.sum())


def _scores_csv_path(out_dir, config_index: int, seed: int):
    return out_dir / f"config_{config_index:04d}_seed_{seed}.csv"


def write_scores_csv(path, scores) -> None:
    with open(path, "w") as fh:
        fh.write("point_index,score\n")
        for i, s in enumerate(np.asarray(scores, dtype=np.float64)):
            fh.write(f"{i},{float(s)!r}\n")


def read_scores_csv(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "point_index,score":
            raise ConfigError(f"{path}: unexpected header {header!r}")
        return np.array([float(line.split(",")[1]) for line in fh])


def sweep(detector, grid, dataset, seeds, out_dir=None,
          losses_path=None) -> SweepResult:
    """Run every config for every seed; collect scores, losses, AUROCs.

    With out_dir set, per-(config, seed) score CSVs are written and reused
    on rerun: fold groups whose files all exist are loaded, not retrained,
    which makes interrupted sweeps resumable and reruns idempotent.
    """
    if not isinstance(grid, HpGrid):
        grid = HpGrid(grid)
    if hasattr(detector, "required_dimensions"):
        _require(grid.names, detector.required_dimensions())
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ConfigError("at least one seed is required")
    configs = expand_grid(grid)
    x = _features(dataset)
    labels = dataset.labels if isinstance(dataset, Dataset) else None
    n = x.shape[0]
    s_total, b_total = len(seeds), len(configs)
    scores = np.zeros((s_total, b_total, n))
    losses = np.full((s_total, b_total), np.nan)
    aurocs = np.full((s_total, b_total), np.nan)
    seconds = np.zeros((s_total, b_total))
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    loss_store = _LossStore(losses_path) if losses_path else None
    for si, seed in enumerate(seeds):
        pending = []
        for cfg in configs:
            path = (None if out_dir is None
                    else _scores_csv_path(out_dir, cfg.index, seed))
            stored_loss = loss_store.get(cfg.index, seed) if loss_store else None
            if (path is not None and path.exists()
                    and (loss_store is None or stored_loss is not None)):
                scores[si, cfg.index] = read_scores_csv(path)
                if stored_loss is not None:
                    losses[si, cfg.index] = stored_loss
            else:
                pending.append(cfg)
        if pending:
            for run in detector.run_configs(x, pending, seed):
                bi = run.config.index
                scores[si, bi] = run.scores
                losses[si, bi] = run.loss
                seconds[si, bi] = run.seconds
                if out_dir is not None:
                    write_scores_csv(
                        _scores_csv_path(out_dir, bi, seed), run.scores)
                if loss_store is not None:
                    loss_store.put(bi, seed, run.loss)
        if labels is not None:
            for bi in range(b_total):
                try:
                    aurocs[si, bi] = auroc_of(scores[si, bi], labels)
                except MetricError:
                    pass
    if loss_store is not None:
        loss_store.flush()
    summary = None
    if labels is not None and np.isfinite(aurocs).all():
        summary = summarize(aurocs)
    return SweepResult(configs, seeds, scores, losses, aurocs, seconds,
                       summary)


class _LossStore:
    """Tiny CSV side-store for per-(config, seed) losses, for resume."""

    def __init__(self, path):
        self.path = path
        self._data = {}
        if path.exists():
            with open(path) as fh:
                header = fh.readline()
                for line in fh:
                    bi, seed, loss = line.strip().split(",")
                    self._data[(int(bi), int(seed))] = float(loss)

    def get(self, config_index, seed):
        return self._data.get((config_index, seed))

    def put(self, config_index, seed, loss):
        self._data[(config_index, seed)] = float(loss)

    def flush(self):
        with open(self.path, "w") as fh:
            fh.write("config_index,seed,loss\n")
            for (bi, seed), loss in sorted(self._data.items()):
                fh.write(f"{bi},{seed},{loss!r}\n")


def select_by_lowest_loss(losses) -> int:
    """Index of the lowest final training loss; ties break to the lowest
    config index. NaN losses (detectors without a loss) are skipped."""
    losses = np.asarray(losses, dtype=np.float64).ravel()
    if losses.size == 0 or not np.isfinite(losses).any():
        raise MetricError("no finite losses to select from")
    return int(np.nanargmin(losses))


def select_per_seed(result: SweepResult) -> list[int]:
    return [select_by_lowest_loss(result.losses[si])
            for si in range(len(result.seeds))]


def hyper_ensemble_of_sweep(result: SweepResult) -> np.ndarray:
    """Pointwise mean of per-config scores, per seed: (n_seeds, n) array."""
    return result.scores.mean(axis=1)
