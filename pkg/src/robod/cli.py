"""Command-line front end.

Seven commands are installed as console scripts:

  robod       shared-model hyper-ensemble scores
  robod-sub   subsampled variant (out-of-sample scoring)
  irobod      independently trained hyper-ensemble baseline
  vanilla-ae  one plain autoencoder
  iforest     isolation forest
  sweep       per-config sensitivity sweep for a baseline detector
  report      aggregate metrics/timing tables across finished runs

Every run writes a self-describing directory: resolved_config.json (exact
settings after defaulting), manifest.json (dataset provenance and run
bookkeeping), scores/*.csv (point_index,score), metrics.json (AUROC summary
with a fixed key set), timing.json, and models/ where applicable. Run
directories are deterministic by default (runs/<command>_<dataset>), so
rerunning a finished command is a no-op and an interrupted sweep resumes
from its per-config files.

Errors are reported as one JSON object on stderr, {"error": {"kind", ...,
"message": ...}}, with a nonzero exit code; a missing input file has kind
"io".
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .backend import backend_name
from .baselines import (IsoForestDetector, VanillaAEConfig, iforest_fit,
                        iforest_score, vanilla_ae_score_with_loss)
from .dataio import load_csv, minmax_scale
from .ensemble import (DEFAULT_DECAYS, DEFAULT_INDEPENDENT_GRID,
                       DEFAULT_IFOREST_GRID, DEFAULT_SHARED_GRID, HpGrid,
                       VanillaAEDetector, hyper_ensemble_of_sweep,
                       irobod_score, read_scores_csv, robod_score,
                       robod_subsampled_score, select_per_seed, sweep,
                       write_scores_csv)
from .errors import ConfigError, MetricError, RobodError
from .evalkit import auroc_of, stats_dict

OUT_ROOT_ENV = "ROBOD_OUT"


# ---------------------------------------------------------------------------
# plumbing


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _emit_error(kind: str, message: str) -> None:
    sys.stderr.write(
        json.dumps({"error": {"kind": kind, "message": message}}) + "\n")


def _error_kind(exc: BaseException) -> str:
    if isinstance(exc, FileNotFoundError):
        return "io"
    if isinstance(exc, OSError):
        return "io"
    if isinstance(exc, json.JSONDecodeError):
        return "parse"
    if isinstance(exc, RobodError):
        return exc.kind
    if isinstance(exc, (MetricError,)):
        return "metric"
    if isinstance(exc, NotImplementedError):
        return "internal"
    if isinstance(exc, (ValueError, TypeError, KeyError)):
        return "config"
    return "internal"


def _guarded(runner, args) -> int:
    try:
        runner(args)
        return 0
    except BrokenPipeError:
        return 0
    except KeyboardInterrupt:
        _emit_error("interrupted", "interrupted")
        return 130
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        _emit_error(_error_kind(exc), str(exc))
        return 1


def _base_parser(command: str, description: str) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=command, description=description)
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    return parser


def _add_data_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True,
                        help="input CSV with a numeric feature matrix and a "
                             "0/1 label column")
    parser.add_argument("--label-col", default="label",
                        help="name of the label column (default: label)")
    parser.add_argument("--no-minmax", action="store_true",
                        help="skip per-feature min-max scaling to [0, 1]")


def _add_run_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seeds", type=int, default=1, metavar="N",
                        help="number of seeds; runs use seeds 0..N-1 "
                             "(default: 1)")
    parser.add_argument("--out", default=None,
                        help="run directory (default: "
                             f"$({OUT_ROOT_ENV})/<command>_<dataset> or "
                             "runs/<command>_<dataset>)")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker budget; execution is currently "
                             "sequential and this is recorded only")
    parser.add_argument("--batch-size", type=int, default=128)


def _add_grid_arg(parser: argparse.ArgumentParser, text: str) -> None:
    parser.add_argument("--grid", default=None, metavar="FILE",
                        help=f"JSON file mapping name -> value list ({text})")


def _load_grid(path, default: dict) -> dict:
    if path is None:
        return {k: list(v) for k, v in default.items()}
    with open(path) as fh:
        grid = json.load(fh)
    if not isinstance(grid, dict):
        raise ConfigError(f"{path}: grid file must hold a JSON object")
    return grid


def _resolve_run_dir(command: str, data_path: str, out) -> Path:
    if out is not None:
        return Path(out)
    root = Path(os.environ.get(OUT_ROOT_ENV, "runs"))
    return root / f"{command}_{Path(data_path).stem}"


def _load_dataset(args):
    ds = load_csv(args.data, label_column=args.label_col)
    if not args.no_minmax:
        ds = minmax_scale(ds)
    return ds


def _seed_list(n: int) -> list[int]:
    if n < 1:
        raise ConfigError(f"--seeds must be >= 1, got {n}")
    return list(range(n))


def _parse_decays(args) -> tuple:
    if args.decays is not None:
        decays = tuple(float(v) for v in args.decays.split(","))
        if args.k is not None and args.k != len(decays):
            raise ConfigError(
                f"--k {args.k} disagrees with {len(decays)} --decays values")
        return decays
    k = args.k if args.k is not None else len(DEFAULT_DECAYS)
    if not 1 <= k <= len(DEFAULT_DECAYS):
        raise ConfigError(
            f"--k must be in 1..{len(DEFAULT_DECAYS)} unless --decays is "
            f"given, got {k}")
    return tuple(DEFAULT_DECAYS[:k])


def _metrics_payload(aurocs: list) -> dict:
    finite = [a for a in aurocs if a is not None and np.isfinite(a)]
    keys = ("min", "max", "mean", "std", "q1", "median", "q3")
    if not finite:
        payload = {k: None for k in keys}
        payload.update(auroc=None, runs=len(aurocs))
        return payload
    payload = stats_dict(np.asarray(finite))
    payload["auroc"] = payload["mean"]
    payload["runs"] = len(aurocs)
    return payload


def _safe_auroc(scores, labels):
    try:
        return auroc_of(scores, labels)
    except MetricError:
        return None


def _print_metrics(run_dir: Path, metrics: dict) -> None:
    auroc = metrics.get("auroc")
    text = "n/a" if auroc is None else f"{auroc:.4f}"
    std = metrics.get("std")
    spread = "" if (std is None or metrics["runs"] <= 1) \
        else f" +/- {std:.4f}"
    print(f"auroc {text}{spread} over {metrics['runs']} run(s)")
    print(f"artifacts in {run_dir}")


# ---------------------------------------------------------------------------
# shared detector-command driver


def _run_detector(command: str, args, score_one, resolved_extra):
    """Common flow: load data, per-seed score (resuming finished seeds),
    metrics over seeds, artifact files.

    score_one(ds, seed, run_dir) -> (scores, bookkeeping dict)
    """
    ds = _load_dataset(args)
    run_dir = _resolve_run_dir(command, args.data, args.out)
    scores_dir = run_dir / "scores"
    scores_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "models").mkdir(exist_ok=True)
    seeds = _seed_list(args.seeds)
    aurocs = []
    per_seed_info = {}
    per_seed_seconds = {}
    for seed in seeds:
        final_path = scores_dir / f"final_seed_{seed}.csv"
        if final_path.exists():
            scores = read_scores_csv(final_path)
            info = {"resumed": True}
            seconds = 0.0
        else:
            started = time.perf_counter()
            scores, info = score_one(ds, seed, run_dir)
            seconds = time.perf_counter() - started
            write_scores_csv(final_path, scores)
        aurocs.append(_safe_auroc(scores, ds.labels))
        per_seed_info[str(seed)] = info
        per_seed_seconds[str(seed)] = seconds
    metrics = _metrics_payload(aurocs)
    _write_json(run_dir / "metrics.json", metrics)
    _write_json(run_dir / "timing.json", {
        "command": command,
        "dataset": ds.name,
        "per_seed_seconds": per_seed_seconds,
        "total_seconds": sum(per_seed_seconds.values()),
    })
    _write_json(run_dir / "manifest.json", {
        "command": command,
        "dataset": ds.name,
        "data": ds.manifest,
        "n": ds.n,
        "dim": ds.dim,
        "seeds": seeds,
        "per_seed": per_seed_info,
        "backend": backend_name(),
    })
    resolved = {"command": command, "version": __version__,
                "backend": backend_name(),
                "data": str(args.data), "label_col": args.label_col,
                "minmax": not args.no_minmax, "seeds": seeds,
                "jobs": args.jobs, "out": str(run_dir)}
    resolved.update(resolved_extra)
    _write_json(run_dir / "resolved_config.json", resolved)
    _print_metrics(run_dir, metrics)


def _save_group_models(run_dir: Path, seed: int, group_models) -> None:
    from .aes import save_model

    for gi, (shared_values, model) in enumerate(group_models):
        path = run_dir / "models" / f"seed_{seed}_group_{gi:03d}.bin"
        save_model(model, path, extra={"shared_values": shared_values,
                                       "seed": seed})


# ---------------------------------------------------------------------------
# commands


def main_robod(argv=None) -> int:
    parser = _base_parser(
        "robod",
        "Hyper-ensemble outlier scores from one width/depth-shared "
        "autoencoder ensemble per hyperparameter config.")
    _add_data_args(parser)
    _add_run_args(parser)
    _add_grid_arg(parser, "epochs/lr/dropout/weight_decay")
    parser.add_argument("--k", type=int, default=None,
                        help="number of width members (prefix of the "
                             "default decay list)")
    parser.add_argument("--l", type=int, default=6,
                        help="number of encoder layers / depth members "
                             "(default: 6)")
    parser.add_argument("--decays", default=None,
                        help="comma-separated width decay per member, "
                             "overrides --k")
    args = parser.parse_args(argv)

    def run(args):
        decays = _parse_decays(args)
        grid = _load_grid(args.grid, DEFAULT_SHARED_GRID)

        def score_one(ds, seed, run_dir):
            result = robod_score(ds, decays, args.l, grid, seed,
                                 batch_size=args.batch_size,
                                 keep_models=True)
            _save_group_models(run_dir, seed, result.group_models)
            return result.final, {
                "configs": len(result.losses),
                "run_seeds": [int(s) for s in result.run_seeds],
                "losses": list(result.losses),
                "seconds_per_config": list(result.seconds),
            }

        extra = {"k": len(decays), "l": args.l, "decays": list(decays),
                 "grid": grid, "batch_size": args.batch_size}
        _run_detector("robod", args, score_one, extra)

    return _guarded(run, args)


def main_robod_sub(argv=None) -> int:
    parser = _base_parser(
        "robod-sub",
        "Subsampled hyper-ensemble: members train on their own subsample "
        "and score only points they never saw.")
    _add_data_args(parser)
    _add_run_args(parser)
    _add_grid_arg(parser, "epochs/lr/dropout/weight_decay")
    parser.add_argument("--k", type=int, default=None)
    parser.add_argument("--l", type=int, default=6)
    parser.add_argument("--decays", default=None)
    parser.add_argument("--delta", type=float, default=0.1,
                        help="per-member sampling rate in (0, 1) "
                             "(default: 0.1)")
    args = parser.parse_args(argv)

    def run(args):
        decays = _parse_decays(args)
        grid = _load_grid(args.grid, DEFAULT_SHARED_GRID)

        def score_one(ds, seed, run_dir):
            result = robod_subsampled_score(
                ds, decays, args.l, grid, args.delta, seed,
                batch_size=args.batch_size)
            return result.final, {
                "configs": len(result.losses),
                "run_seeds": [int(s) for s in result.run_seeds],
                "delta": args.delta,
                "fallback_count": result.fallback_count,
                "seconds_per_config": list(result.seconds),
            }

        extra = {"k": len(decays), "l": args.l, "decays": list(decays),
                 "grid": grid, "delta": args.delta,
                 "batch_size": args.batch_size}
        _run_detector("robod-sub", args, score_one, extra)

    return _guarded(run, args)


def main_irobod(argv=None) -> int:
    parser = _base_parser(
        "irobod",
        "Independent-training hyper-ensemble baseline: one standalone "
        "autoencoder per config, scores averaged over the grid.")
    _add_data_args(parser)
    _add_run_args(parser)
    _add_grid_arg(parser,
                  "n_layers/layer_decay/epochs/lr/dropout/weight_decay")
    args = parser.parse_args(argv)

    def run(args):
        grid = _load_grid(args.grid, DEFAULT_INDEPENDENT_GRID)

        def score_one(ds, seed, run_dir):
            result = irobod_score(ds, grid, seed,
                                  batch_size=args.batch_size,
                                  keep_models=True)
            _save_group_models(run_dir, seed, result.group_models)
            return result.final, {
                "configs": len(result.losses),
                "run_seeds": [int(s) for s in result.run_seeds],
                "losses": list(result.losses),
                "seconds_per_config": list(result.seconds),
            }

        _run_detector("irobod", args, score_one,
                      {"grid": grid, "batch_size": args.batch_size})

    return _guarded(run, args)


def main_vanilla_ae(argv=None) -> int:
    parser = _base_parser(
        "vanilla-ae",
        "Outlier scores from a single plain autoencoder (squared "
        "reconstruction error).")
    _add_data_args(parser)
    _add_run_args(parser)
    parser.add_argument("--l", type=int, default=3,
                        help="encoder layers (default: 3)")
    parser.add_argument("--layer-decay", type=float, default=2.0)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--epochs", type=int, default=250)
    parser.add_argument("--dropout", type=float, default=0.0)
    parser.add_argument("--weight-decay", type=float, default=0.0)
    args = parser.parse_args(argv)

    def run(args):
        from .aes import save_model
        from .ensemble import train_vanilla

        def score_one(ds, seed, run_dir):
            by_epoch, model = train_vanilla(
                ds, args.l, args.layer_decay, args.lr, [args.epochs],
                args.dropout, args.weight_decay, seed,
                batch_size=args.batch_size)
            scores, loss = by_epoch[args.epochs]
            save_model(model, run_dir / "models" / f"seed_{seed}.bin",
                       extra={"seed": seed})
            return scores, {"loss": loss}

        extra = {"n_layers": args.l, "layer_decay": args.layer_decay,
                 "lr": args.lr, "epochs": args.epochs,
                 "dropout": args.dropout,
                 "weight_decay": args.weight_decay,
                 "batch_size": args.batch_size}
        _run_detector("vanilla-ae", args, score_one, extra)

    return _guarded(run, args)


def main_iforest(argv=None) -> int:
    parser = _base_parser(
        "iforest",
        "Isolation forest outlier scores (axis-aligned random trees on "
        "subsamples).")
    _add_data_args(parser)
    _add_run_args(parser)
    parser.add_argument("--n-trees", type=int, default=100)
    parser.add_argument("--subsample", type=int, default=256,
                        help="per-tree subsample size; clamped to the "
                             "dataset size with a warning (default: 256)")
    args = parser.parse_args(argv)

    def run(args):
        def score_one(ds, seed, run_dir):
            forest = iforest_fit(ds.features, n_trees=args.n_trees,
                                 subsample=args.subsample, seed=seed)
            scores = iforest_score(forest, ds.features)
            return scores, {"subsample_effective": forest.subsample,
                            "height_limit": forest.height_limit}

        _run_detector("iforest", args, score_one,
                      {"n_trees": args.n_trees,
                       "subsample": args.subsample})

    return _guarded(run, args)


def main_sweep(argv=None) -> int:
    parser = _base_parser(
        "sweep",
        "Run a detector once per grid config per seed; persist per-config "
        "scores and summarize the AUROC distribution.")
    _add_data_args(parser)
    _add_run_args(parser)
    parser.add_argument("--method", choices=("vanilla-ae", "iforest"),
                        default="vanilla-ae")
    _add_grid_arg(parser, "per-method dimensions")
    args = parser.parse_args(argv)
    return _guarded(_run_sweep, args)


def _run_sweep(args) -> None:
    ds = _load_dataset(args)
    run_dir = _resolve_run_dir(f"sweep_{args.method}", args.data, args.out)
    scores_dir = run_dir / "scores"
    scores_dir.mkdir(parents=True, exist_ok=True)
    seeds = _seed_list(args.seeds)
    if args.method == "vanilla-ae":
        detector = VanillaAEDetector(batch_size=args.batch_size)
        grid = _load_grid(args.grid, DEFAULT_INDEPENDENT_GRID)
    else:
        detector = IsoForestDetector()
        grid = _load_grid(args.grid, DEFAULT_IFOREST_GRID)
    result = sweep(detector, HpGrid(grid), ds, seeds, out_dir=scores_dir,
                   losses_path=run_dir / "losses.csv")
    aurocs = [None if not np.isfinite(a) else float(a)
              for a in result.aurocs.ravel()]
    metrics = _metrics_payload(aurocs)
    _write_json(run_dir / "metrics.json", metrics)

    ensemble_scores = hyper_ensemble_of_sweep(result)
    per_seed = {}
    selected = None
    if not np.isnan(result.losses).all():
        selected = select_per_seed(result)
    for si, seed in enumerate(seeds):
        write_scores_csv(scores_dir / f"ensemble_seed_{seed}.csv",
                         ensemble_scores[si])
        row = {"ensemble_auroc": _safe_auroc(ensemble_scores[si],
                                             ds.labels),
               "mean_config_auroc": float(np.nanmean(result.aurocs[si]))
               if np.isfinite(result.aurocs[si]).any() else None}
        if selected is not None:
            row["selected_config"] = selected[si]
            row["selected_auroc"] = (
                None if not np.isfinite(result.aurocs[si, selected[si]])
                else float(result.aurocs[si, selected[si]]))
        per_seed[str(seed)] = row
    _write_json(run_dir / "summary.json", {
        "method": args.method,
        "per_seed": per_seed,
        "cross_seed": None if result.summary is None
        else result.summary.as_dict(),
    })
    _write_json(run_dir / "timing.json", {
        "command": f"sweep_{args.method}",
        "dataset": ds.name,
        "total_seconds": result.total_seconds,
    })
    _write_json(run_dir / "manifest.json", {
        "command": f"sweep_{args.method}",
        "dataset": ds.name,
        "data": ds.manifest,
        "n": ds.n,
        "dim": ds.dim,
        "seeds": seeds,
        "configs": len(result.configs),
        "backend": backend_name(),
    })
    _write_json(run_dir / "resolved_config.json", {
        "command": f"sweep_{args.method}", "version": __version__,
        "backend": backend_name(), "method": args.method,
        "data": str(args.data), "label_col": args.label_col,
        "minmax": not args.no_minmax, "seeds": seeds, "grid": grid,
        "jobs": args.jobs, "batch_size": args.batch_size,
        "out": str(run_dir)})
    _print_metrics(run_dir, metrics)


def main_report(argv=None) -> int:
    parser = _base_parser(
        "report",
        "Aggregate finished run directories into method x dataset tables "
        "(AUROC mean +/- std, wall-clock, time savings).")
    parser.add_argument("runs", nargs="+", metavar="RUN_DIR",
                        help="run directories produced by the other "
                             "commands")
    parser.add_argument("--out", default=".",
                        help="directory for report.txt and report.csv "
                             "(default: current directory)")
    args = parser.parse_args(argv)
    return _guarded(_run_report, args)


def _load_run_summary(run_dir: Path) -> dict:
    resolved = json.loads((run_dir / "resolved_config.json").read_text())
    metrics = json.loads((run_dir / "metrics.json").read_text())
    timing = json.loads((run_dir / "timing.json").read_text())
    manifest = json.loads((run_dir / "manifest.json").read_text())
    return {
        "method": resolved["command"],
        "dataset": manifest["dataset"],
        "auroc_mean": metrics.get("mean"),
        "auroc_std": metrics.get("std"),
        "runs": metrics.get("runs"),
        "total_seconds": timing.get("total_seconds"),
    }


def _run_report(args) -> None:
    rows = [_load_run_summary(Path(d)) for d in args.runs]
    methods = sorted({r["method"] for r in rows})
    datasets = sorted({r["dataset"] for r in rows})
    cell = {(r["method"], r["dataset"]): r for r in rows}

    def fmt(r) -> str:
        if r is None or r["auroc_mean"] is None:
            return "-"
        std = r["auroc_std"] if r["auroc_std"] is not None else 0.0
        return f"{r['auroc_mean']:.3f}+/-{std:.3f}"

    width = max(12, max((len(m) for m in methods), default=0) + 2)
    col = max(16, max((len(d) for d in datasets), default=0) + 2)
    lines = ["AUROC (mean+/-std over runs)", ""]
    header = " " * width + "".join(d.ljust(col) for d in datasets)
    lines.append(header)
    for m in methods:
        line = m.ljust(width)
        for d in datasets:
            line += fmt(cell.get((m, d))).ljust(col)
        lines.append(line)

    savings = []
    for d in datasets:
        fast = cell.get(("robod", d))
        slow = cell.get(("irobod", d))
        if fast and slow and slow["total_seconds"]:
            pct = (1.0 - fast["total_seconds"] / slow["total_seconds"]) * 100
            savings.append((d, pct, fast["total_seconds"],
                            slow["total_seconds"]))
    if savings:
        lines += ["", "training-time savings of the shared model", ""]
        for d, pct, tf, ts in savings:
            lines.append(f"  {d}: {pct:.1f}% ({tf:.1f}s vs {ts:.1f}s)")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    text = "\n".join(lines) + "\n"
    (out_dir / "report.txt").write_text(text)
    with open(out_dir / "report.csv", "w") as fh:
        fh.write("method,dataset,auroc_mean,auroc_std,runs,total_seconds\n")
        for r in sorted(rows, key=lambda r: (r["method"], r["dataset"])):
            mean = "" if r["auroc_mean"] is None else repr(r["auroc_mean"])
            std = "" if r["auroc_std"] is None else repr(r["auroc_std"])
            secs = ("" if r["total_seconds"] is None
                    else repr(r["total_seconds"]))
            fh.write(f"{r['method']},{r['dataset']},{mean},{std},"
                     f"{r['runs']},{secs}\n")
    sys.stdout.write(text)
    print(f"wrote {out_dir / 'report.txt'} and {out_dir / 'report.csv'}")
