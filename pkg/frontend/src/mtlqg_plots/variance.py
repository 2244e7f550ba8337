"""Estimator relative RMSE against the number of tasks, log-log, with the
fitted slope annotated.

Usage: mtlqg-plot-variance variance.csv out/variance.png
"""

import argparse

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .csvio import read_columns, save_figure


def fit_slope(ns, values):
    """Least-squares slope of log(values) vs log(ns); None for a single point."""
    if len(ns) < 2:
        return None
    return float(np.polyfit(np.log(np.asarray(ns, dtype=float)),
                            np.log(np.asarray(values, dtype=float)), 1)[0])


def plot_variance(variance_csv, out_path):
    data = read_columns(variance_csv, required=["n_tasks", "rel_rmse"])
    ns = [int(v) for v in data["n_tasks"]]
    rmse = [float(v) for v in data["rel_rmse"]]
    slope = fit_slope(ns, rmse)

    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.loglog(ns, rmse, "o-", color="tab:green")
    if slope is not None:
        anchor = rmse[0] * (np.asarray(ns, dtype=float) / ns[0]) ** -0.5
        ax.loglog(ns, anchor, "--", color="gray", linewidth=0.9,
                  label=r"$N^{-1/2}$ reference")
        ax.annotate(f"slope = {slope:.2f}", xy=(0.05, 0.08),
                    xycoords="axes fraction", fontsize=10)
        ax.legend(fontsize=8)
    ax.set_xlabel("number of tasks N")
    ax.set_ylabel("relative RMSE")
    ax.set_title("one-point estimator error vs N")
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    paths = save_figure(fig, out_path)
    plt.close(fig)
    return paths, slope


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("variance_csv")
    parser.add_argument("out_path")
    args = parser.parse_args(argv)
    paths, slope = plot_variance(args.variance_csv, args.out_path)
    for path in paths:
        print(path)
    if slope is not None:
        print(f"slope {slope:.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
