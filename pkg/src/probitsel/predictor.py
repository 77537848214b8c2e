"""Refit on a fixed feature subset and classify new observations.

The refit reuses the chain engine with the mask frozen, so the random
effects keep their full treatment; reported coefficients are posterior
means over the post-burn-in iterations.  Predictions use the probit
link, with and without the fitted group effects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import ndtr

from .data import DataSet
from .errors import DataError
from .params import GammaMask, HyperParams, hp_from_dict, hp_to_dict
from .sampler import run_chain

INTERCEPT_NAME = "(intercept)"

LABEL_POSITIVE = "positive"
LABEL_NEGATIVE = "negative"
LABEL_UNDETERMINED = "undetermined"

MODEL_FORMAT = "probitsel.fitted_model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class FittedModel:
    """Posterior-mean probit model on a fixed feature subset."""

    features: tuple[str, ...]
    intercept: float
    beta_hat: np.ndarray
    u_hat: dict[str, float]
    d_hat: np.ndarray | None
    config_echo: HyperParams | None = None


@dataclass(frozen=True)
class Prediction:
    prob_positive: float
    label: str
    used_random_effect: bool


@dataclass(frozen=True)
class EvalMetrics:
    """Confusion summary; undetermined rows sit outside the matrix."""

    tp: int
    tn: int
    fp: int
    fn: int
    undetermined: int
    n: int
    sensitivity: float
    specificity: float
    misclassified: int
    undetermined_fraction: float


def _check_zone(zone) -> tuple[float, float] | None:
    if zone is None:
        return None
    lo, hi = float(zone[0]), float(zone[1])
    if not lo < 0.5 < hi:
        raise ValueError(f"undetermined zone must straddle 0.5, got ({lo}, {hi})")
    return lo, hi


def refit_fixed_gamma(data: DataSet, features, hp: HyperParams) -> FittedModel:
    """Fit the probit (mixed) model on the given features only.

    Prepends an intercept column, freezes the mask, and runs the Gibbs
    chain without the MH sweep, averaging coefficients, random effects
    and their covariance over the kept iterations.
    """
    features = tuple(features)
    if not features:
        raise ValueError("feature subset is empty")
    if len(set(features)) != len(features):
        raise ValueError("duplicate features in the subset")
    missing = [f for f in features if f not in data.feature_names]
    if missing:
        raise DataError(f"features not in dataset: {missing}")
    if INTERCEPT_NAME in features:
        raise ValueError(f"{INTERCEPT_NAME!r} is reserved for the intercept column")
    if len(features) + 1 >= data.n:
        raise ValueError(
            f"{len(features)} features plus intercept must stay below n = {data.n}"
        )

    col = {name: j for j, name in enumerate(data.feature_names)}
    picked = [col[f] for f in features]
    aug = DataSet(
        y=data.y,
        X=np.column_stack([np.ones(data.n), data.X.take(picked, axis=1)]),
        feature_names=(INTERCEPT_NAME,) + features,
        Z=data.Z,
        group_labels=data.group_labels,
    )
    mask = GammaMask.from_indices(np.arange(len(features) + 1), aug.p)
    report = run_chain(aug, hp, fixed_gamma=mask, collect_posterior=True)
    post = report.posterior_means
    u_hat: dict[str, float] = {}
    if post.u is not None and data.group_levels is not None:
        u_hat = {g: float(v) for g, v in zip(data.group_levels, post.u)}
    return FittedModel(
        features=features,
        intercept=float(post.beta[0]),
        beta_hat=post.beta[1:].copy(),
        u_hat=u_hat,
        d_hat=post.d_matrix,
        config_echo=report.config_echo,
    )


def predict(
    model: FittedModel,
    x: Mapping[str, float],
    group: str | None = None,
    zone=None,
) -> Prediction:
    """Class probability and label for one observation.

    ``x`` must cover exactly the model features.  A known group adds its
    fitted effect to the linear predictor; an unknown or omitted group
    falls back to the fixed effects alone (not an error).  Probability
    exactly 0.5 labels negative; inside the zone, no label is issued.
    """
    zone = _check_zone(zone)
    missing = [f for f in model.features if f not in x]
    if missing:
        raise DataError(f"observation is missing model features: {missing}")
    unknown = [f for f in x if f not in model.features]
    if unknown:
        raise DataError(f"unknown features in observation: {unknown}")
    lp = model.intercept + float(
        np.dot(model.beta_hat, [float(x[f]) for f in model.features])
    )
    used = group is not None and group in model.u_hat
    if used:
        lp += model.u_hat[group]
    prob = float(ndtr(lp))
    if zone is not None and zone[0] <= prob <= zone[1]:
        label = LABEL_UNDETERMINED
    elif prob > 0.5:
        label = LABEL_POSITIVE
    else:
        label = LABEL_NEGATIVE
    return Prediction(prob_positive=prob, label=label, used_random_effect=used)


def predict_rows(
    model: FittedModel,
    data: DataSet,
    zone=None,
    use_groups: bool = True,
) -> list[Prediction]:
    """Predictions for every row of a dataset.

    ``use_groups=False`` ignores group labels even when present,
    mimicking prediction for observations from an unknown source.
    """
    missing = [f for f in model.features if f not in data.feature_names]
    if missing:
        raise DataError(f"dataset lacks model features: {missing}")
    col = {name: j for j, name in enumerate(data.feature_names)}
    picked = [col[f] for f in model.features]
    out = []
    for i in range(data.n):
        x = {f: float(data.X[i, j]) for f, j in zip(model.features, picked)}
        group = (
            data.group_labels[i]
            if use_groups and data.group_labels is not None
            else None
        )
        out.append(predict(model, x, group=group, zone=zone))
    return out


def evaluate(
    model: FittedModel,
    data: DataSet,
    zone=None,
    use_groups: bool = True,
) -> EvalMetrics:
    """Confusion counts and rates over a labelled dataset.

    Undetermined rows are counted but excluded from the confusion
    matrix, so tp + tn + fp + fn + undetermined = n.
    """
    preds = predict_rows(model, data, zone=zone, use_groups=use_groups)
    tp = tn = fp = fn = und = 0
    for pred, truth in zip(preds, data.y):
        if pred.label == LABEL_UNDETERMINED:
            und += 1
        elif pred.label == LABEL_POSITIVE:
            if truth == 1:
                tp += 1
            else:
                fp += 1
        else:
            if truth == 0:
                tn += 1
            else:
                fn += 1
    sens = tp / (tp + fn) if (tp + fn) else float("nan")
    spec = tn / (tn + fp) if (tn + fp) else float("nan")
    return EvalMetrics(
        tp=tp,
        tn=tn,
        fp=fp,
        fn=fn,
        undetermined=und,
        n=data.n,
        sensitivity=sens,
        specificity=spec,
        misclassified=fp + fn,
        undetermined_fraction=und / data.n,
    )


def model_to_dict(model: FittedModel, manifest_digest: str | None = None) -> dict:
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "features": list(model.features),
        "intercept": model.intercept,
        "beta_hat": [float(b) for b in model.beta_hat],
        "u_hat": {k: float(v) for k, v in model.u_hat.items()},
        "d_hat": None if model.d_hat is None else np.asarray(model.d_hat).tolist(),
        "config": None if model.config_echo is None else hp_to_dict(model.config_echo),
    }
    if manifest_digest is not None:
        payload["manifest_digest"] = manifest_digest
    return payload


def save_model(model: FittedModel, path, manifest_digest: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, manifest_digest), fh, indent=2)
        fh.write("\n")


def load_model(path) -> FittedModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a fitted-model file")
    if payload.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {payload.get('version')}")
    config = payload.get("config")
    return FittedModel(
        features=tuple(payload["features"]),
        intercept=float(payload["intercept"]),
        beta_hat=np.asarray(payload["beta_hat"], dtype=float),
        u_hat={k: float(v) for k, v in payload.get("u_hat", {}).items()},
        d_hat=None if payload.get("d_hat") is None else np.asarray(payload["d_hat"], float),
        config_echo=None if config is None else hp_from_dict(config),
    )
