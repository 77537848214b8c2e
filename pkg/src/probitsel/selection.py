"""Selection-frequency ranking and the relative weighted consistency
measure for comparing selected subsets across runs."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .sampler import RunReport


@dataclass(frozen=True)
class RankEntry:
    feature: str
    column: int
    count: int
    frequency: float


@dataclass(frozen=True)
class SelectionRanking:
    """Features ordered by how often the chain selected them.

    ``entries`` covers exactly the features with a positive count,
    sorted by count descending with ties broken by ascending column
    index; ``zero_count_features`` is the number of features never
    selected.  ``max_gap`` is the largest drop between adjacent sorted
    counts and ``max_gap_position`` the number of features above that
    drop (0 when fewer than two features were ever selected).
    """

    entries: tuple[RankEntry, ...]
    kept: int
    zero_count_features: int
    max_gap: int
    max_gap_position: int

    def features(self) -> tuple[str, ...]:
        return tuple(e.feature for e in self.entries)


def rank_selections(report: RunReport) -> SelectionRanking:
    """Deterministic ranking of a report's selection counts."""
    if report.kept <= 0:
        raise ValueError("report has no post-burn-in iterations")
    counts = np.asarray(report.selection_counts, dtype=np.int64)
    order = np.lexsort((np.arange(counts.size), -counts))
    order = order[counts[order] > 0]
    entries = tuple(
        RankEntry(
            feature=report.feature_names[j],
            column=int(j),
            count=int(counts[j]),
            frequency=float(counts[j] / report.kept),
        )
        for j in order
    )
    sorted_counts = np.array([e.count for e in entries], dtype=np.int64)
    if sorted_counts.size >= 2:
        drops = sorted_counts[:-1] - sorted_counts[1:]
        pos = int(np.argmax(drops))
        max_gap = int(drops[pos])
        max_gap_position = pos + 1
    else:
        max_gap = 0
        max_gap_position = 0
    return SelectionRanking(
        entries=entries,
        kept=report.kept,
        zero_count_features=int(np.sum(counts == 0)),
        max_gap=max_gap,
        max_gap_position=max_gap_position,
    )


def select_top(
    ranking: SelectionRanking,
    top_k: int | None = None,
    min_count: int | None = None,
) -> tuple[str, ...]:
    """Cut the ranking by one rule: the k best, or a count threshold.

    The gap-based visual cut is left to the caller: the ranking carries
    the sorted counts and the max-gap index for that purpose.
    """
    if (top_k is None) == (min_count is None):
        raise ValueError("give exactly one of top_k or min_count")
    if top_k is not None:
        if top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {top_k}")
        if top_k > len(ranking.entries):
            raise ValueError(
                f"top_k = {top_k} exceeds the {len(ranking.entries)} features "
                "with nonzero counts"
            )
        return tuple(e.feature for e in ranking.entries[:top_k])
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    return tuple(e.feature for e in ranking.entries if e.count >= min_count)


def _weighted_consistency(freqs: np.ndarray, total: int, n_runs: int) -> float:
    return float(np.sum(freqs * (freqs - 1)) / (total * (n_runs - 1)))


def cw_rel(subsets, p_total: int) -> float:
    """Relative weighted consistency of selected subsets across runs.

    0 is indistinguishable from features landing in subsets at random,
    1 is the most stable outcome possible for the observed subset sizes.
    The raw weighted consistency sum(F(F-1)) / (N(n-1)) is normalized by
    its extremes for the given total occurrence count N, run count n,
    and feature pool size: the minimum spreads occurrences as evenly as
    possible over the pool, the maximum piles them onto as few features
    as possible.  Both anchors are pinned by the boundary cases
    (identical subsets give 1, pairwise disjoint subsets give 0).
    """
    subsets = [frozenset(s) for s in subsets]
    if len(subsets) < 2:
        raise ValueError(f"need at least 2 subsets, got {len(subsets)}")
    if any(len(s) == 0 for s in subsets):
        raise ValueError("every subset must be nonempty")
    p_total = int(p_total)
    freq = Counter()
    for s in subsets:
        freq.update(s)
    if len(freq) > p_total:
        raise ValueError(f"{len(freq)} distinct features exceed p_total = {p_total}")
    for f in freq:
        if isinstance(f, (int, np.integer)) and not 0 <= int(f) < p_total:
            raise ValueError(f"feature index {f} outside [0, {p_total})")

    n_runs = len(subsets)
    counts = np.array(sorted(freq.values()), dtype=np.int64)
    total = int(counts.sum())
    cw = _weighted_consistency(counts, total, n_runs)

    # extremes as functions of (N, n_runs, p_total)
    rem_pool = total % p_total
    cw_min = (total**2 - p_total * (total - rem_pool) - rem_pool**2) / (
        total * p_total * (n_runs - 1)
    )
    rem_runs = total % n_runs
    cw_max = (rem_runs**2 + total * (n_runs - 1) - rem_runs * n_runs) / (
        total * (n_runs - 1)
    )
    if cw_max <= cw_min:
        return 1.0
    value = (cw - cw_min) / (cw_max - cw_min)
    return float(min(1.0, max(0.0, value)))
