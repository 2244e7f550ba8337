"""Train/test optimality-gap bands (mean +/- 1 std) over training iterations.

Usage: mtlqg-plot-generalization eval.csv out/generalization.png
"""

import argparse

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .csvio import read_columns, save_figure

SPLIT_COLORS = {"train": "tab:blue", "test": "tab:orange"}


def plot_generalization(eval_csv, out_path):
    data = read_columns(eval_csv, required=["iteration", "split", "task_id", "gap"])
    iterations = np.array([int(v) for v in data["iteration"]])
    splits = np.array(data["split"])
    gaps = np.array([float(v) for v in data["gap"]])

    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for split in ("train", "test"):
        mask = splits == split
        if not np.any(mask):
            continue
        its = np.unique(iterations[mask])
        mean = np.empty(its.size)
        std = np.empty(its.size)
        for n, it in enumerate(its):
            vals = gaps[mask & (iterations == it)]
            vals = vals[np.isfinite(vals)]
            mean[n] = np.mean(vals)
            std[n] = np.std(vals)
        color = SPLIT_COLORS[split]
        ax.plot(its, mean, color=color, label=f"{split} mean")
        ax.fill_between(its, mean - std, mean + std, color=color, alpha=0.25,
                        linewidth=0)
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("optimality gap")
    ax.set_title("train/test gaps (mean ± 1 std)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    paths = save_figure(fig, out_path)
    plt.close(fig)
    return paths


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("eval_csv")
    parser.add_argument("out_path")
    args = parser.parse_args(argv)
    for path in plot_generalization(args.eval_csv, args.out_path):
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
