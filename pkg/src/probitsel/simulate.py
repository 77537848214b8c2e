"""Synthetic benchmark generator with known ground truth.

Features are i.i.d. Uniform(-5, 5); outcomes follow a probit mixed
model with a sparse coefficient vector and additive per-group offsets.
The named offset presets span no random effect (U1) up to offsets that
dominate the fixed effects entirely (U5).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .data import DataSet, subset_rows
from .errors import DataError

U_PRESETS: dict[str, tuple[float, ...]] = {
    "U1": (0.0, 0.0, 0.0, 0.0),
    "U2": (-3.0, -2.0, 2.0, 3.0),
    "U3": (-5.0, -3.0, 3.0, 5.0),
    "U4": (-10.0, -5.0, 5.0, 10.0),
    "U5": (-30.0, -10.0, 10.0, 30.0),
}

TRUTH_FORMAT = "probitsel.ground_truth"
TRUTH_VERSION = 1


@dataclass(frozen=True)
class SimConfig:
    """Generator settings; defaults give the desk-scale benchmark
    (200 observations, 200 features, 5 true predictors, 4 groups)."""

    n: int = 200
    p: int = 200
    support: tuple[int, ...] = (0, 1, 2, 3, 4)
    beta_values: tuple[float, ...] = (-1.0, -1.0, 1.0, 1.0, 2.0)
    u_levels: tuple[float, ...] = U_PRESETS["U1"]
    group_sizes: tuple[int, ...] = (50, 50, 50, 50)
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.p < 1:
            raise ValueError(f"need n >= 2 and p >= 1, got n={self.n}, p={self.p}")
        if len(self.support) != len(self.beta_values):
            raise ValueError(
                f"{len(self.support)} support indices for {len(self.beta_values)} coefficients"
            )
        if len(set(self.support)) != len(self.support):
            raise ValueError("duplicate support indices")
        if any(not 0 <= j < self.p for j in self.support):
            raise ValueError(f"support indices must lie in [0, {self.p})")
        if any(s <= 0 for s in self.group_sizes):
            raise ValueError(f"every group must be nonempty, got sizes {self.group_sizes}")
        if sum(self.group_sizes) != self.n:
            raise ValueError(
                f"group sizes {self.group_sizes} sum to {sum(self.group_sizes)}, not n = {self.n}"
            )
        if len(self.u_levels) != len(self.group_sizes):
            raise ValueError(
                f"{len(self.u_levels)} offsets for {len(self.group_sizes)} groups"
            )


@dataclass(frozen=True)
class GroundTruth:
    """What the generator actually used, for scoring recovery."""

    support: tuple[int, ...]
    support_features: tuple[str, ...]
    beta_values: tuple[float, ...]
    u_levels: tuple[float, ...]
    group_levels: tuple[str, ...]
    group_sizes: tuple[int, ...]
    seed: int


def _feature_names(p: int) -> tuple[str, ...]:
    width = len(str(p))
    return tuple(f"x{j + 1:0{width}d}" for j in range(p))


def _group_names(k: int) -> tuple[str, ...]:
    width = len(str(k))
    return tuple(f"g{l + 1:0{width}d}" for l in range(k))


def generate(config: SimConfig) -> tuple[DataSet, GroundTruth]:
    """Draw one synthetic dataset; deterministic given the config seed."""
    gen = np.random.default_rng(config.seed)
    names = _feature_names(config.p)
    groups = _group_names(len(config.group_sizes))
    labels = tuple(
        g for g, size in zip(groups, config.group_sizes) for _ in range(size)
    )
    X = gen.uniform(-5.0, 5.0, size=(config.n, config.p))
    support = np.asarray(config.support, dtype=np.int64)
    beta = np.asarray(config.beta_values, dtype=float)
    offsets = np.asarray(config.u_levels, dtype=float)
    group_idx = np.repeat(np.arange(len(config.group_sizes)), config.group_sizes)
    lp = X[:, support] @ beta + offsets[group_idx]
    y = (gen.random(config.n) < ndtr(lp)).astype(np.int64)
    if y.sum() in (0, config.n):
        raise DataError(
            "simulation produced a single-class outcome; change the seed "
            "or soften the offsets"
        )
    data = DataSet(y=y, X=X, feature_names=names, group_labels=labels)
    truth = GroundTruth(
        support=tuple(int(j) for j in config.support),
        support_features=tuple(names[j] for j in config.support),
        beta_values=tuple(float(b) for b in config.beta_values),
        u_levels=tuple(float(u) for u in config.u_levels),
        group_levels=data.group_levels,
        group_sizes=tuple(int(s) for s in config.group_sizes),
        seed=config.seed,
    )
    return data, truth


def split_half_by_group(data: DataSet, seed: int) -> tuple[DataSet, DataSet]:
    """50/50 split with exact balance inside every group.

    Every group size must be even; deterministic given the seed.
    """
    if data.group_labels is None:
        raise DataError("dataset has no group labels to balance on")
    gen = np.random.default_rng(seed)
    train_rows: list[int] = []
    val_rows: list[int] = []
    for level in data.group_levels:
        idx = np.array(
            [i for i, g in enumerate(data.group_labels) if g == level], dtype=np.int64
        )
        if idx.size % 2 != 0:
            raise DataError(
                f"group {level!r} has odd size {idx.size}; a half split needs even groups"
            )
        perm = gen.permutation(idx.size)
        train_rows.extend(idx[perm[: idx.size // 2]].tolist())
        val_rows.extend(idx[perm[idx.size // 2 :]].tolist())
    train_rows = np.sort(np.asarray(train_rows, dtype=np.int64))
    val_rows = np.sort(np.asarray(val_rows, dtype=np.int64))
    return subset_rows(data, train_rows), subset_rows(data, val_rows)


def truth_to_dict(truth: GroundTruth) -> dict:
    return {
        "format": TRUTH_FORMAT,
        "version": TRUTH_VERSION,
        "support": list(truth.support),
        "support_features": list(truth.support_features),
        "beta_values": list(truth.beta_values),
        "u_levels": list(truth.u_levels),
        "group_levels": list(truth.group_levels),
        "group_sizes": list(truth.group_sizes),
        "seed": truth.seed,
    }


def save_truth(truth: GroundTruth, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(truth_to_dict(truth), fh, indent=2)
        fh.write("\n")


def load_truth(path) -> GroundTruth:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != TRUTH_FORMAT:
        raise ValueError(f"{path}: not a ground-truth file")
    return GroundTruth(
        support=tuple(int(j) for j in payload["support"]),
        support_features=tuple(payload["support_features"]),
        beta_values=tuple(float(b) for b in payload["beta_values"]),
        u_levels=tuple(float(u) for u in payload["u_levels"]),
        group_levels=tuple(payload["group_levels"]),
        group_sizes=tuple(int(s) for s in payload["group_sizes"]),
        seed=int(payload["seed"]),
    )
