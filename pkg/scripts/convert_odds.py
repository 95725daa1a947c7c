#!/usr/bin/env python3
"""Convert an ODDS-style .mat table (X, y) into the CSV layout load_csv reads.

Usage: python3 scripts/convert_odds.py cardio.mat data/cardio.csv
"""

import argparse
import sys
from pathlib import Path

import numpy as np


def convert(src: Path, dst: Path) -> int:
    import scipy.io

    try:
        mat = scipy.io.loadmat(src)
    except NotImplementedError:
        # v7.3 files are HDF5; the classic benchmark tables are not
        print(f"{src}: MATLAB v7.3 file, re-save it as v7 or extract X/y "
              "with an HDF5 reader first", file=sys.stderr)
        return 1
    if "X" not in mat or "y" not in mat:
        print(f"{src}: expected variables 'X' and 'y', found "
              f"{sorted(k for k in mat if not k.startswith('__'))}",
              file=sys.stderr)
        return 1
    x = np.asarray(mat["X"], dtype=np.float64)
    y = np.asarray(mat["y"]).reshape(-1).astype(np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        print(f"{src}: X is {x.shape}, y is {y.shape}", file=sys.stderr)
        return 1
    n, d = x.shape
    dst.parent.mkdir(parents=True, exist_ok=True)
    with open(dst, "w", encoding="utf-8") as fh:
        fh.write(",".join(f"f{j}" for j in range(d)) + ",label\n")
        for row, lab in zip(x, y):
            fh.write(",".join(repr(float(v)) for v in row) + f",{lab}\n")
    print(f"{dst}: {n} rows, {d} features, {int(y.sum())} outliers")
    return 0


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("src", type=Path, help=".mat file with X and y")
    parser.add_argument("dst", type=Path, help="CSV to write")
    args = parser.parse_args()
    return convert(args.src, args.dst)


if __name__ == "__main__":
    sys.exit(main())
