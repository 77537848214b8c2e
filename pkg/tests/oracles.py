"""Independent reference computations used to pin expected test values.

Everything here is deliberately naive: explicit projection matrices,
textbook closed forms, direct enumeration.  None of it shares code with
the package paths it checks.
"""

from itertools import combinations

import numpy as np
from scipy import stats


def truncated_moments(mean: float, side: str) -> tuple[float, float]:
    """Exact (mean, variance) of N(mean, 1) truncated at zero.

    ``side`` follows the sampler convention: ``left_at_0`` keeps the
    positive half, ``right_at_0`` the negative half.
    """
    if side == "left_at_0":
        alpha = -mean
        lam = stats.norm.pdf(alpha) / stats.norm.sf(alpha)
        e = mean + lam
        v = 1.0 + alpha * lam - lam * lam
        return e, v
    if side == "right_at_0":
        beta = -mean
        ratio = stats.norm.pdf(beta) / stats.norm.cdf(beta)
        e = mean - ratio
        v = 1.0 - beta * ratio - ratio * ratio
        return e, v
    raise ValueError(side)


def mask_log_density(X, resid, combo, c, pi):
    """Log of the integrated mask density, computed the naive way:
    build the projection matrix explicitly and keep every term."""
    d = len(combo)
    p = X.shape[1]
    Xg = X[:, list(combo)]
    proj = Xg @ np.linalg.inv(Xg.T @ Xg) @ Xg.T
    qf = float(resid @ proj @ resid)
    return (
        -0.5 * d * np.log(1.0 + c)
        - 0.5 * (float(resid @ resid) - (c / (1.0 + c)) * qf)
        + d * np.log(pi)
        + (p - d) * np.log(1.0 - pi)
    )


def enumerate_mask_probs(X, resid, c, pi, d) -> dict[tuple, float]:
    """Normalized probabilities of every size-d mask by direct evaluation."""
    p = X.shape[1]
    logs = {
        combo: mask_log_density(X, resid, combo, c, pi)
        for combo in combinations(range(p), d)
    }
    peak = max(logs.values())
    weights = {k: np.exp(v - peak) for k, v in logs.items()}
    total = sum(weights.values())
    return {k: w / total for k, w in weights.items()}


def total_variation(p_map: dict, q_map: dict) -> float:
    keys = set(p_map) | set(q_map)
    return 0.5 * sum(abs(p_map.get(k, 0.0) - q_map.get(k, 0.0)) for k in keys)


def weighted_consistency_raw(subsets) -> float:
    """CW by its definition, summed feature by feature."""
    from collections import Counter

    freq = Counter()
    for s in subsets:
        freq.update(set(s))
    n = len(subsets)
    total = sum(freq.values())
    return sum((f / total) * ((f - 1) / (n - 1)) for f in freq.values())
