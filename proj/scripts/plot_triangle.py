#!/usr/bin/env python3
"""Triangle plot from the CSV files written by `kcal diagnose --triangle`."""

import argparse
import csv
import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("dir", type=Path, help="diagnose output directory")
    ap.add_argument("-o", "--out", type=Path, default=Path("triangle.png"))
    args = ap.parse_args()

    names = [r["name"] for r in read_rows(args.dir / "summary.csv")]
    ids = sorted(int(re.fullmatch(r"hist1d_(\d+)\.csv", p.name).group(1)) for p in args.dir.glob("hist1d_*.csv"))
    if not ids:
        raise SystemExit(f"no hist1d_*.csv in {args.dir}; run diagnose with --triangle")

    n = len(ids)
    fig, axes = plt.subplots(n, n, figsize=(2.2 * n, 2.2 * n), squeeze=False)
    for a, i in enumerate(ids):
        rows = read_rows(args.dir / f"hist1d_{i}.csv")
        lo = np.array([float(r["bin_lo"]) for r in rows])
        hi = np.array([float(r["bin_hi"]) for r in rows])
        counts = np.array([float(r["count"]) for r in rows])
        ax = axes[a][a]
        ax.bar(lo, counts, width=hi - lo, align="edge", color="0.4")
        ax.set_yticks([])
        for b in range(a + 1, n):
            axes[a][b].axis("off")
        for b, j in enumerate(ids[:a]):
            rows = read_rows(args.dir / f"hist2d_{j}_{i}.csv")
            xs = sorted({float(r["x_lo"]) for r in rows} | {float(r["x_hi"]) for r in rows})
            ys = sorted({float(r["y_lo"]) for r in rows} | {float(r["y_hi"]) for r in rows})
            grid = np.zeros((len(xs) - 1, len(ys) - 1))
            for r in rows:
                grid[xs.index(float(r["x_lo"])), ys.index(float(r["y_lo"]))] = float(r["count"])
            axes[a][b].pcolormesh(xs, ys, grid.T, cmap="Greys", shading="flat")
        axes[n - 1][a].set_xlabel(names[i - 1] + " / prior mean", fontsize=8)
        if a > 0:
            axes[a][0].set_ylabel(names[i - 1] + " / prior mean", fontsize=8)
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
