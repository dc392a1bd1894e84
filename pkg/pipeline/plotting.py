"""Static plots of experiment results"""
import logging
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from pipeline.results import ensure_dir

logger = logging.getLogger(__name__)


def plot_bound_vs_error(rows: pd.DataFrame, epsilon: float, lam: float, output_dir: str) -> str:
    """
    Scatter of certified bound (x) against actual error (y) with the y = x diagonal.

    Blue circles: groundtruth inside the PURSE, which must sit on or below the
    diagonal. Red squares: groundtruth outside. Empty PURSEs have no bound
    and are drawn at x = 0.

    Args:
        rows: bounds.csv content
        epsilon: miscoverage level to plot
        lam: rotation weight to plot
        output_dir: Output directory for plots

    Returns:
        Path of the saved PNG
    """
    try:
        ensure_dir(output_dir)
        sel = rows[np.isclose(rows["epsilon"], epsilon) & np.isclose(rows["lambda"], lam)]
        x = sel["d_upper"].fillna(0.0).to_numpy()
        y = sel["actual_error"].to_numpy()
        inside = sel["gt_in_purse"].astype(bool).to_numpy()

        fig, ax = plt.subplots(figsize=(8, 8))
        ax.scatter(x[inside], y[inside], marker="o", facecolors="none", edgecolors="blue", label="GT in PURSE")
        ax.scatter(x[~inside], y[~inside], marker="s", facecolors="none", edgecolors="red",
                   label="GT outside PURSE")
        top = max(float(np.max(x, initial=0.0)), float(np.max(y, initial=0.0)), 1e-6) * 1.05
        ax.plot([0, top], [0, top], color="black", linestyle="--", label="y = x")
        ax.set_xlim(0, top)
        ax.set_ylim(0, top)
        what = "rotation (Frobenius)" if lam == 1.0 else ("translation (m)" if lam == 0.0 else f"lambda={lam}")
        ax.set_title(f"Worst-case bound vs. error, {what}, epsilon={epsilon}")
        ax.set_xlabel("Bound")
        ax.set_ylabel("Actual error")
        ax.legend()
        ax.grid(True)

        plot_filename = os.path.join(output_dir, f"bound_vs_error_eps{epsilon}_lam{lam}.png")
        plt.tight_layout()
        plt.savefig(plot_filename)
        plt.close(fig)
        logger.info(f"Saved bound-vs-error plot to {plot_filename}")
        return plot_filename
    except Exception as e:
        logger.error(f"Error plotting bound vs. error: {str(e)}", exc_info=True)
        raise


def plot_coverage(summary: pd.DataFrame, output_dir: str) -> str:
    """Mean keypoint and PURSE coverage per epsilon with the Beta reference"""
    try:
        ensure_dir(output_dir)
        pos = np.arange(len(summary))
        width = 0.35
        fig, ax = plt.subplots(figsize=(10, 6))
        ax.bar(pos - width / 2, summary["kp_mean"], width, yerr=summary["kp_std"], label="Keypoint sets",
               color="tab:blue", capsize=4)
        ax.bar(pos + width / 2, summary["purse_mean"], width, yerr=summary["purse_std"], label="PURSE",
               color="tab:orange", capsize=4)
        ax.errorbar(pos, summary["beta_mean"], yerr=summary["beta_std"], fmt="k_", markersize=20, capsize=6,
                    label="Beta reference")
        ax.plot(pos, 1.0 - summary["epsilon"], "g*", markersize=10, label="1 - epsilon")
        ax.set_xticks(pos)
        ax.set_xticklabels([f"{eps:g}" for eps in summary["epsilon"]])
        ax.set_ylim(0, 1.05)
        ax.set_title("Empirical coverage")
        ax.set_xlabel("epsilon")
        ax.set_ylabel("Coverage")
        ax.legend()
        ax.grid(True, axis="y")

        plot_filename = os.path.join(output_dir, "coverage.png")
        plt.tight_layout()
        plt.savefig(plot_filename)
        plt.close(fig)
        logger.info(f"Saved coverage plot to {plot_filename}")
        return plot_filename
    except Exception as e:
        logger.error(f"Error plotting coverage: {str(e)}", exc_info=True)
        raise


def plot_bound_cdf(cdf: pd.DataFrame, lam: float, output_dir: str) -> str:
    try:
        ensure_dir(output_dir)
        fig, ax = plt.subplots(figsize=(10, 6))
        sel = cdf[np.isclose(cdf["lambda"], lam)]
        for eps, group in sel.groupby("epsilon", sort=True):
            ax.step(group["d_upper"], group["cdf"], where="post", label=f"epsilon={eps:g}")
        ax.set_title(f"CDF of worst-case bounds, lambda={lam}")
        ax.set_xlabel("Bound")
        ax.set_ylabel("Fraction of scenes")
        ax.legend()
        ax.grid(True)

        plot_filename = os.path.join(output_dir, f"bound_cdf_lam{lam}.png")
        plt.tight_layout()
        plt.savefig(plot_filename)
        plt.close(fig)
        logger.info(f"Saved bound CDF plot to {plot_filename}")
        return plot_filename
    except Exception as e:
        logger.error(f"Error plotting bound CDF: {str(e)}", exc_info=True)
        raise


def plot_all(output_dir: str, plot_dir: str = None) -> list:
    """Every plot whose input CSV exists in ``output_dir``"""
    plot_dir = plot_dir or os.path.join(output_dir, "plots")
    saved = []
    summary_csv = os.path.join(output_dir, "coverage_summary.csv")
    if os.path.exists(summary_csv):
        saved.append(plot_coverage(pd.read_csv(summary_csv), plot_dir))
    bounds_csv = os.path.join(output_dir, "bounds.csv")
    if os.path.exists(bounds_csv):
        rows = pd.read_csv(bounds_csv)
        for (eps, lam), _ in rows.groupby(["epsilon", "lambda"], sort=True):
            saved.append(plot_bound_vs_error(rows, eps, lam, plot_dir))
    cdf_csv = os.path.join(output_dir, "bounds_cdf.csv")
    if os.path.exists(cdf_csv):
        cdf = pd.read_csv(cdf_csv)
        for lam in sorted(cdf["lambda"].unique()):
            saved.append(plot_bound_cdf(cdf, lam, plot_dir))
    if not saved:
        logger.warning(f"No result CSVs found in {output_dir}")
    return saved
