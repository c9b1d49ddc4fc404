"""Render the CSV outputs of ``blockrandom`` runs (needs matplotlib).

    python3 scripts/plot_results.py runs/channel-analog --out figs
"""
import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("root", type=Path, help="a compare output directory")
    ap.add_argument("--out", type=Path, default=Path("figs"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    runs = sorted(p for p in args.root.iterdir() if (p / "epochs.csv").exists())

    fig, ax = plt.subplots()
    for run in runs:
        rows = read(run / "epochs.csv")
        ax.plot([int(r["epoch"]) for r in rows], [float(r["valid_metric"]) for r in rows], label=run.name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation metric")
    ax.legend()
    fig.savefig(args.out / "validation.png", dpi=120)

    fig, ax = plt.subplots()
    for run in runs:
        if (run / "jsd.csv").exists():
            rows = read(run / "jsd.csv")
            ax.plot([int(r["batch"]) for r in rows], [float(r["jsd_vs_global"]) for r in rows], label=run.name)
    ax.set_xlabel("batch")
    ax.set_ylabel("JSD to global target pdf")
    ax.legend()
    fig.savefig(args.out / "jsd.png", dpi=120)


if __name__ == "__main__":
    main()
