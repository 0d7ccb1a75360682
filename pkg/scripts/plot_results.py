"""Render the CSV outputs of ``tke-forge run`` as figures.

Plot contract (all files in the run's output directory):
  tke_<dataset>.csv          time_s, ..., tke, tke_ma      -> TKE time series
  corr_pearson.csv           dataset, variable, <9 vars>   -> heatmap per dataset
  corr_spearman.csv          same layout                   -> heatmap per dataset
  kde_<model>_<dataset>.csv  residual, density             -> residual density
  pred_<model>_<dataset>.csv row, time_s, split, actual, predicted -> scatter

Needs matplotlib (``pip install .[plot]``); the package itself does not.

    python scripts/plot_results.py runs/synthetic/results --dataset SYN
"""

import argparse
import csv
from pathlib import Path

import numpy as np


def read(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows


def main():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ap = argparse.ArgumentParser()
    ap.add_argument("results", type=Path)
    ap.add_argument("--dataset", required=True)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()
    out = args.out or args.results / "figures"
    out.mkdir(parents=True, exist_ok=True)
    d = args.dataset

    tke_file = args.results / f"tke_{d}.csv"
    if tke_file.exists():
        rows = read(tke_file)
        t = np.array([float(r["time_s"]) for r in rows])
        fig, ax = plt.subplots(figsize=(8, 3))
        ax.plot(t, [float(r["tke"]) for r in rows], lw=0.4, label="TKE")
        ax.plot(t, [float(r["tke_ma"]) for r in rows], lw=1.0, label="TKE_MA")
        ax.set(xlabel="time (s)", ylabel="TKE (m$^2$/s$^2$)")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / f"tke_{d}.png", dpi=150)

    for kind in ("pearson", "spearman"):
        rows = [r for r in read(args.results / f"corr_{kind}.csv") if r["dataset"] == d]
        names = [r["variable"] for r in rows]
        M = np.array([[float(r[n]) for n in names] for r in rows])
        fig, ax = plt.subplots(figsize=(5, 4.5))
        im = ax.imshow(M, vmin=-1, vmax=1, cmap="coolwarm")
        ax.set_xticks(range(len(names)), names, rotation=90)
        ax.set_yticks(range(len(names)), names)
        fig.colorbar(im)
        fig.tight_layout()
        fig.savefig(out / f"corr_{kind}_{d}.png", dpi=150)

    fig_k, ax_k = plt.subplots(figsize=(5, 4))
    for path in sorted(args.results.glob(f"kde_*_{d}.csv")):
        model = path.stem[4:-len(d) - 1]
        rows = read(path)
        ax_k.plot([float(r["residual"]) for r in rows], [float(r["density"]) for r in rows], label=model)
        pred = read(args.results / f"pred_{model}_{d}.csv")
        test = [r for r in pred if r["split"] == "test"]
        fig, ax = plt.subplots(figsize=(4, 4))
        a = np.array([float(r["actual"]) for r in test])
        p = np.array([float(r["predicted"]) for r in test])
        ax.scatter(a, p, s=3)
        lim = [min(a.min(), p.min()), max(a.max(), p.max())]
        ax.plot(lim, lim, "k--", lw=0.8)
        ax.set(xlabel="actual TKE_MA", ylabel="predicted", title=model)
        fig.tight_layout()
        fig.savefig(out / f"pred_{model}_{d}.png", dpi=150)
        plt.close(fig)
    ax_k.set(xlabel="residual", ylabel="density")
    ax_k.legend()
    fig_k.tight_layout()
    fig_k.savefig(out / f"kde_{d}.png", dpi=150)
    print(f"figures in {out}")


if __name__ == "__main__":
    main()
