"""Figure rendering for CLI reports.

Every figure lands next to the delimited output it illustrates; the
numbers in the CSV/JSON files stay the authoritative record.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .selection import SelectionRanking

DPI = 150


def plot_selection_counts(ranking: SelectionRanking, path) -> None:
    """Box-and-points view of how often each feature was selected.

    One point per ever-selected feature; the dashed line marks the
    largest gap in the sorted counts (the natural cut candidate).
    """
    counts = np.array([e.count for e in ranking.entries], dtype=float)
    fig, ax = plt.subplots(figsize=(5, 6))
    if counts.size:
        ax.boxplot(counts, widths=0.35, vert=True, showfliers=False)
        jitter = np.linspace(-0.12, 0.12, counts.size) if counts.size > 1 else [0.0]
        ax.plot(1.0 + np.asarray(jitter), counts, "o", ms=4, alpha=0.7, color="#1f77b4")
        if 0 < ranking.max_gap_position < counts.size:
            cut = 0.5 * (
                counts[ranking.max_gap_position - 1] + counts[ranking.max_gap_position]
            )
            ax.axhline(cut, ls="--", lw=1, color="#d62728")
            ax.annotate(
                f"max gap ({ranking.max_gap})",
                xy=(1.25, cut),
                fontsize=8,
                color="#d62728",
                va="center",
            )
    ax.set_xticks([])
    ax.set_ylabel(f"selections out of {ranking.kept} kept iterations")
    ax.set_title(
        f"{counts.size} features ever selected, "
        f"{ranking.zero_count_features} never"
    )
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def plot_probability_histogram(probs, path, zone=None) -> None:
    """Histogram of predicted positive-class probabilities."""
    probs = np.asarray(list(probs), dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(probs, bins=20, range=(0.0, 1.0), color="#1f77b4", edgecolor="white")
    if zone is not None:
        ax.axvspan(zone[0], zone[1], color="#ff7f0e", alpha=0.2, label="undetermined zone")
        ax.legend(fontsize=8)
    ax.set_xlabel("probability positive")
    ax.set_ylabel("observations")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def plot_run_overlap(feature_runs: dict[str, int], n_runs: int, path, top: int = 40) -> None:
    """Bar chart of how many runs kept each feature."""
    items = sorted(feature_runs.items(), key=lambda kv: (-kv[1], kv[0]))[:top]
    fig, ax = plt.subplots(figsize=(6, max(2.5, 0.25 * len(items) + 1)))
    if items:
        names = [k for k, _ in items][::-1]
        vals = [v for _, v in items][::-1]
        ax.barh(range(len(items)), vals, color="#1f77b4")
        ax.set_yticks(range(len(items)))
        ax.set_yticklabels(names, fontsize=7)
    ax.set_xlabel(f"runs containing the feature (of {n_runs})")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
