#!/usr/bin/env python3
"""Time the compiled kernels against the pure-numpy fallback.

Per-kernel timings run both implementations in-process on hot-path shapes;
the end-to-end row reruns a small shared-model scoring job in a subprocess
per backend, since the package picks its kernel module once at import.
Prints a JSON report.
"""

import argparse
import importlib
import json
import subprocess
import sys
import time

import numpy as np

ACT_LEAKY = 1  # matches backend.ACT_LEAKY_RELU
SLOPE = 0.01

_E2E = r"""
import json, time
import numpy as np
from robod.backend import backend_name
from robod.ensemble import DEFAULT_DECAYS, robod_score
from robod.rng import Rng

x = Rng(11).uniform(0.0, 1.0, 512 * 16).reshape(512, 16)
grid = {"epochs": [40], "lr": [1e-3], "dropout": [0.0, 0.2]}
started = time.perf_counter()
result = robod_score(x, DEFAULT_DECAYS, 4, grid, seed=3)
elapsed = time.perf_counter() - started
print(json.dumps({"backend": backend_name(), "seconds": elapsed,
                  "checksum": float(result.final.sum())}))
"""


def _inputs(rng):
    k, b, m, r = 8, 128, 64, 32
    x = rng.uniform(-1.0, 1.0, (k * b, m))
    w = rng.uniform(-0.5, 0.5, (m, r))
    s = np.sign(rng.uniform(-1.0, 1.0, (k, m)))
    mask = np.ones((k, r))
    mask[:, r // 2:] = np.tile([[1.0], [0.0]], (k // 2, r // 2))
    r_eff = np.sign(rng.uniform(-1.0, 1.0, (k, r))) * mask
    b_eff = rng.uniform(-0.1, 0.1, (k, r)) * mask
    return k, x, w, s, r_eff, b_eff, mask


def _bench(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        started = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - started)
    return best, out


def kernel_rows(repeat):
    mods = {"py": importlib.import_module("robod._kernels_py")}
    try:
        mods["c"] = importlib.import_module("robod._kernels")
    except ImportError:
        pass
    rng = np.random.default_rng(5)
    k, x, w, s, r_eff, b_eff, mask = _inputs(rng)
    out_py, xs, y = mods["py"].be_forward(x, w, s, r_eff, b_eff, k,
                                          ACT_LEAKY, SLOPE)
    gout = rng.uniform(-1.0, 1.0, out_py.shape)
    # adam kernels take flat buffers, exactly as the optimizer calls them
    p = rng.uniform(-1.0, 1.0, 256 * 256)
    g = rng.uniform(-1.0, 1.0, 256 * 256)
    moments = rng.uniform(0.0, 1.0, (2, 256 * 256))
    u = rng.uniform(0.0, 1.0, x.shape)
    cases = {
        "be_forward": lambda mod: mod.be_forward(
            x, w, s, r_eff, b_eff, k, ACT_LEAKY, SLOPE)[0],
        "be_backward": lambda mod: mod.be_backward(
            gout, out_py, y, xs, x, w, s, r_eff, mask, k, ACT_LEAKY,
            SLOPE)[1],
        "adam_update": lambda mod: mod.adam_update(
            p.copy(), g, moments[0].copy(), moments[1].copy(),
            1e-3, 0.9, 0.999, 1e-8, 1e-4, 0.9, 0.999) or p,
        "rowwise_sqerr": lambda mod: mod.rowwise_sqerr(x, 0.5 * x),
        "dropout_mask_apply": lambda mod: mod.dropout_mask_apply(x, u, 0.2),
        "act_apply": lambda mod: mod.act_apply(x, ACT_LEAKY, SLOPE),
    }
    rows = {}
    for name, call in cases.items():
        row = {}
        outs = {}
        for tag, mod in mods.items():
            seconds, out = _bench(lambda: call(mod), repeat)
            row[f"{tag}_seconds"] = seconds
            outs[tag] = np.asarray(out, dtype=np.float64)
        if "c" in outs:
            denom = np.abs(outs["py"]).max() or 1.0
            row["max_rel_diff"] = float(
                np.abs(outs["c"] - outs["py"]).max() / denom)
            row["speedup"] = row["py_seconds"] / row["c_seconds"]
        rows[name] = row
    return rows


def end_to_end(backends):
    rows = {}
    for tag in backends:
        proc = subprocess.run(
            [sys.executable, "-c", _E2E], capture_output=True, text=True,
            env={**__import__("os").environ, "ROBOD_BACKEND": tag})
        if proc.returncode != 0:
            rows[tag] = {"error": proc.stderr.strip()[-200:]}
            continue
        rows[tag] = json.loads(proc.stdout)
    if "c" in rows and "seconds" in rows.get("c", {}):
        rows["speedup"] = rows["py"]["seconds"] / rows["c"]["seconds"]
    return rows


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=20,
                        help="timing repeats per kernel, best is kept")
    parser.add_argument("--skip-e2e", action="store_true")
    args = parser.parse_args()

    from robod.backend import available_backends
    report = {"available": available_backends(),
              "kernels": kernel_rows(args.repeat)}
    if not args.skip_e2e:
        report["end_to_end"] = end_to_end(report["available"])
    json.dump(report, sys.stdout, indent=2)
    print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
