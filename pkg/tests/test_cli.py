"""End-to-end command tests: artifact layout, resume, error contract.

Every command is invoked through its entry function with an argv list, so
these run the same code paths as the installed console scripts.
"""

import json

import numpy as np
import pytest

from robod.cli import (main_iforest, main_irobod, main_report, main_robod,
                       main_robod_sub, main_sweep, main_vanilla_ae)

METRIC_KEYS = {"auroc", "min", "max", "mean", "std", "q1", "median", "q3",
               "runs"}


def _read_json(path):
    return json.loads(path.read_text())


@pytest.fixture
def shared_grid(tmp_path):
    path = tmp_path / "shared_grid.json"
    path.write_text(json.dumps({"epochs": [2], "lr": [1e-2]}))
    return str(path)


@pytest.fixture
def independent_grid(tmp_path):
    path = tmp_path / "independent_grid.json"
    path.write_text(json.dumps({"n_layers": [1], "layer_decay": [2.0],
                                "epochs": [2], "lr": [1e-2]}))
    return str(path)


def _robod_argv(csv_path, out, grid):
    return ["--data", str(csv_path), "--grid", grid, "--k", "2", "--l", "1",
            "--batch-size", "32", "--out", str(out)]


def test_robod_writes_the_full_artifact_tree(tiny_csv, tmp_path, shared_grid,
                                             capsys):
    csv_path, _, _ = tiny_csv()
    out = tmp_path / "run"
    rc = main_robod(_robod_argv(csv_path, out, shared_grid))
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "auroc" in stdout and str(out) in stdout

    metrics = _read_json(out / "metrics.json")
    assert set(metrics) == METRIC_KEYS
    assert metrics["runs"] == 1
    assert 0.0 <= metrics["auroc"] <= 1.0

    lines = (out / "scores" / "final_seed_0.csv").read_text().splitlines()
    assert lines[0] == "point_index,score"
    assert len(lines) == 1 + 66
    assert (out / "models" / "seed_0_group_000.bin").exists()

    manifest = _read_json(out / "manifest.json")
    assert manifest["command"] == "robod"
    assert manifest["n"] == 66 and manifest["dim"] == 4
    assert manifest["backend"] in ("c", "py")
    assert manifest["per_seed"]["0"]["configs"] == 1

    resolved = _read_json(out / "resolved_config.json")
    assert resolved["k"] == 2 and resolved["l"] == 1
    assert resolved["decays"] == [1.5, 1.75]
    assert resolved["grid"] == {"epochs": [2], "lr": [0.01]}
    assert resolved["version"]

    timing = _read_json(out / "timing.json")
    assert timing["total_seconds"] > 0.0


def test_robod_rerun_resumes_and_is_idempotent(tiny_csv, tmp_path,
                                               shared_grid):
    csv_path, _, _ = tiny_csv()
    out = tmp_path / "run"
    argv = _robod_argv(csv_path, out, shared_grid)
    assert main_robod(argv) == 0
    scores_bytes = (out / "scores" / "final_seed_0.csv").read_bytes()
    metrics_bytes = (out / "metrics.json").read_bytes()

    assert main_robod(argv) == 0
    assert (out / "scores" / "final_seed_0.csv").read_bytes() == scores_bytes
    assert (out / "metrics.json").read_bytes() == metrics_bytes
    manifest = _read_json(out / "manifest.json")
    assert manifest["per_seed"]["0"] == {"resumed": True}
    timing = _read_json(out / "timing.json")
    assert timing["per_seed_seconds"]["0"] == 0.0


def test_default_run_dir_comes_from_the_environment(tiny_csv, tmp_path,
                                                    monkeypatch):
    csv_path, _, _ = tiny_csv(name="blob.csv")
    root = tmp_path / "artifact_root"
    monkeypatch.setenv("ROBOD_OUT", str(root))
    rc = main_vanilla_ae(["--data", str(csv_path), "--epochs", "2",
                          "--l", "1", "--batch-size", "32"])
    assert rc == 0
    run_dir = root / "vanilla-ae_blob"
    assert (run_dir / "metrics.json").exists()
    assert (run_dir / "models" / "seed_0.bin").exists()


def test_robod_sub_records_subsampling_bookkeeping(tiny_csv, tmp_path,
                                                   shared_grid):
    csv_path, _, _ = tiny_csv()
    out = tmp_path / "run"
    rc = main_robod_sub(["--data", str(csv_path), "--grid", shared_grid,
                         "--k", "2", "--l", "1", "--delta", "0.4",
                         "--batch-size", "32", "--out", str(out)])
    assert rc == 0
    manifest = _read_json(out / "manifest.json")
    info = manifest["per_seed"]["0"]
    assert info["delta"] == 0.4
    assert info["fallback_count"] >= 0
    resolved = _read_json(out / "resolved_config.json")
    assert resolved["delta"] == 0.4


def test_irobod_command(tiny_csv, tmp_path, independent_grid):
    csv_path, _, _ = tiny_csv()
    out = tmp_path / "run"
    rc = main_irobod(["--data", str(csv_path), "--grid", independent_grid,
                      "--batch-size", "32", "--out", str(out)])
    assert rc == 0
    assert set(_read_json(out / "metrics.json")) == METRIC_KEYS
    resolved = _read_json(out / "resolved_config.json")
    assert resolved["command"] == "irobod"
    assert resolved["grid"]["n_layers"] == [1]


def test_iforest_command_multi_seed(tiny_csv, tmp_path):
    csv_path, _, _ = tiny_csv()
    out = tmp_path / "run"
    rc = main_iforest(["--data", str(csv_path), "--n-trees", "10",
                       "--subsample", "16", "--seeds", "2",
                       "--out", str(out)])
    assert rc == 0
    metrics = _read_json(out / "metrics.json")
    assert metrics["runs"] == 2
    manifest = _read_json(out / "manifest.json")
    assert manifest["seeds"] == [0, 1]
    assert manifest["per_seed"]["0"]["subsample_effective"] == 16
    assert (out / "scores" / "final_seed_1.csv").exists()


def test_sweep_command_artifacts_and_resume(tiny_csv, tmp_path,
                                            independent_grid, monkeypatch):
    csv_path, _, _ = tiny_csv()
    grid_path = tmp_path / "sweep_grid.json"
    grid_path.write_text(json.dumps({"n_layers": [1], "layer_decay": [2.0],
                                     "epochs": [2, 3], "lr": [1e-2]}))
    out = tmp_path / "run"
    argv = ["--data", str(csv_path), "--method", "vanilla-ae",
            "--grid", str(grid_path), "--seeds", "2", "--batch-size", "32",
            "--out", str(out)]
    assert main_sweep(argv) == 0

    for seed in (0, 1):
        for cfg in (0, 1):
            assert (out / "scores"
                    / f"config_{cfg:04d}_seed_{seed}.csv").exists()
        assert (out / "scores" / f"ensemble_seed_{seed}.csv").exists()
    assert (out / "losses.csv").exists()

    metrics = _read_json(out / "metrics.json")
    assert metrics["runs"] == 4  # 2 configs x 2 seeds

    summary = _read_json(out / "summary.json")
    assert summary["method"] == "vanilla-ae"
    row = summary["per_seed"]["0"]
    assert row["selected_config"] in (0, 1)
    assert 0.0 <= row["ensemble_auroc"] <= 1.0
    assert set(summary["cross_seed"]) == {"per_seed", "cross_seed_mean",
                                          "cross_seed_std"}

    # resume restores a deleted per-config file byte for byte
    blobs = {f.name: f.read_bytes() for f in (out / "scores").glob("*.csv")}
    (out / "scores" / "config_0001_seed_0.csv").unlink()
    assert main_sweep(argv) == 0
    for f in (out / "scores").glob("*.csv"):
        assert f.read_bytes() == blobs[f.name], f.name


def test_sweep_iforest_has_no_loss_selection(tiny_csv, tmp_path):
    csv_path, _, _ = tiny_csv()
    grid_path = tmp_path / "if_grid.json"
    grid_path.write_text(json.dumps({"n_trees": [5], "subsample": [16]}))
    out = tmp_path / "run"
    rc = main_sweep(["--data", str(csv_path), "--method", "iforest",
                     "--grid", str(grid_path), "--out", str(out)])
    assert rc == 0
    summary = _read_json(out / "summary.json")
    assert "selected_config" not in summary["per_seed"]["0"]
    assert summary["cross_seed"] is not None


def test_report_merges_runs_and_computes_savings(tiny_csv, tmp_path,
                                                 shared_grid,
                                                 independent_grid, capsys):
    csv_path, _, _ = tiny_csv()
    robod_dir = tmp_path / "robod_run"
    irobod_dir = tmp_path / "irobod_run"
    assert main_robod(_robod_argv(csv_path, robod_dir, shared_grid)) == 0
    assert main_irobod(["--data", str(csv_path), "--grid", independent_grid,
                        "--batch-size", "32", "--out", str(irobod_dir)]) == 0
    report_dir = tmp_path / "report"
    rc = main_report([str(robod_dir), str(irobod_dir),
                      "--out", str(report_dir)])
    assert rc == 0
    text = (report_dir / "report.txt").read_text()
    assert "AUROC" in text
    assert "training-time savings" in text
    lines = (report_dir / "report.csv").read_text().splitlines()
    assert lines[0] == "method,dataset,auroc_mean,auroc_std,runs,total_seconds"
    methods = {line.split(",")[0] for line in lines[1:]}
    assert methods == {"robod", "irobod"}


def test_missing_data_file_reports_io_kind(capsys):
    rc = main_robod(["--data", "/nonexistent/missing.csv"])
    assert rc == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["kind"] == "io"
    assert "missing.csv" in err["error"]["message"]


def test_unparseable_grid_reports_parse_kind(tiny_csv, tmp_path, capsys):
    csv_path, _, _ = tiny_csv()
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    rc = main_robod(["--data", str(csv_path), "--grid", str(bad),
                     "--out", str(tmp_path / "run")])
    assert rc == 1
    assert json.loads(capsys.readouterr().err)["error"]["kind"] == "parse"


def test_invalid_delta_reports_config_kind(tiny_csv, tmp_path, capsys):
    csv_path, _, _ = tiny_csv()
    rc = main_robod_sub(["--data", str(csv_path), "--delta", "1.5",
                         "--k", "1", "--l", "1",
                         "--out", str(tmp_path / "run")])
    assert rc == 1
    assert json.loads(capsys.readouterr().err)["error"]["kind"] == "config"


def test_invalid_seed_count_reports_config_kind(tiny_csv, tmp_path, capsys):
    csv_path, _, _ = tiny_csv()
    rc = main_iforest(["--data", str(csv_path), "--seeds", "0",
                       "--out", str(tmp_path / "run")])
    assert rc == 1
    assert json.loads(capsys.readouterr().err)["error"]["kind"] == "config"


def test_scores_ignore_labels_entirely(tiny_csv, tmp_path):
    csv_path, x, y = tiny_csv()
    flipped = tmp_path / "flipped.csv"
    original = csv_path.read_text().splitlines()
    rows = [original[0]]
    for line in original[1:]:
        cells = line.rsplit(",", 1)
        rows.append(f"{cells[0]},{1 - int(cells[1])}")
    flipped.write_text("\n".join(rows) + "\n")

    out_a = tmp_path / "run_a"
    out_b = tmp_path / "run_b"
    base = ["--epochs", "2", "--l", "1", "--batch-size", "32"]
    assert main_vanilla_ae(["--data", str(csv_path), "--out", str(out_a)]
                           + base) == 0
    assert main_vanilla_ae(["--data", str(flipped), "--out", str(out_b)]
                           + base) == 0
    assert ((out_a / "scores" / "final_seed_0.csv").read_bytes()
            == (out_b / "scores" / "final_seed_0.csv").read_bytes())
    auroc_a = _read_json(out_a / "metrics.json")["auroc"]
    auroc_b = _read_json(out_b / "metrics.json")["auroc"]
    assert auroc_a != auroc_b
    assert auroc_a == pytest.approx(1.0 - auroc_b, abs=1e-12)


def test_version_flag_exits_cleanly(capsys):
    with pytest.raises(SystemExit) as exc:
        main_robod(["--version"])
    assert exc.value.code == 0
    assert "robod" in capsys.readouterr().out
