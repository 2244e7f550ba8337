"""Per-task optimality gaps over training iterations (first six tasks).

Usage: mtlqg-plot-gaps train_log.csv out/gaps.png
"""

import argparse

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .csvio import read_columns, save_figure

MAX_TASKS = 6


def plot_optimality_gaps(log_csv, out_path):
    data = read_columns(log_csv, required=["iteration", "task_id", "gap"])
    iterations = np.array([int(v) for v in data["iteration"]])
    gaps = np.array([float(v) for v in data["gap"]])
    task_ids = data["task_id"]
    ordered = list(dict.fromkeys(task_ids))[:MAX_TASKS]

    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for tid in ordered:
        mask = np.array([t == tid for t in task_ids])
        its, series = iterations[mask], gaps[mask]
        ax.plot(its, np.maximum(series, 1e-300), label=tid, linewidth=1.1)
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("optimality gap")
    ax.set_title(f"task-specific optimality gaps (first {len(ordered)} tasks)")
    ax.legend(fontsize=7, ncol=2)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    paths = save_figure(fig, out_path)
    plt.close(fig)
    return paths


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("log_csv")
    parser.add_argument("out_path")
    args = parser.parse_args(argv)
    for path in plot_optimality_gaps(args.log_csv, args.out_path):
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
