"""Full-conditional parameters and log-densities of the grouped sampler.

Everything here is a pure function of its inputs.  Quadratic forms over
the active-column projection are computed through Cholesky solves of the
d x d Gram matrix; the n x n hat matrix is never formed, and densities
stay in the log domain throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve
from scipy.linalg.lapack import dpotrf, dtrtrs

from .data import DataSet
from .errors import SingularDesignError
from .params import (
    BlockDiagonalCov,
    CovarianceStructure,
    DiagonalCov,
    GammaMask,
    GeneralCov,
    HyperParams,
)
from .rng import (
    RngHandle,
    sample_inverse_gamma,
    sample_inverse_wishart,
    spd_cholesky,
    standard_normal_lower_tail,
)


@dataclass(frozen=True)
class BetaPosterior:
    """Gaussian full conditional of the active coefficients.

    ``cov`` is c/(1+c) times the inverse active Gram matrix;
    ``chol_xtx`` is the lower Cholesky factor of that Gram matrix.
    """

    mean: np.ndarray
    cov: np.ndarray
    chol_xtx: np.ndarray


@dataclass(frozen=True)
class UPosterior:
    """Gaussian full conditional of the random-effect coefficients."""

    mean: np.ndarray
    cov: np.ndarray


def g_quad_coef(c: float) -> float:
    """Coefficient c / (2(1+c)) weighting projection quadratic forms.

    Increasing in c and bounded above by 1/2.
    """
    c = float(c)
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    return c / (2.0 * (1.0 + c))


def _gram_cholesky(X: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of X_active' X_active.

    Raises :class:`SingularDesignError` carrying the active index set
    when the factorization fails.
    """
    Xg = X.take(indices, axis=1)
    gram = Xg.T @ Xg
    chol, info = dpotrf(gram, lower=1, clean=1)
    if info != 0:
        raise SingularDesignError(
            f"active design is singular (leading minor {info} of the Gram "
            "matrix is not positive definite)",
            indices=indices,
        )
    return chol


def residual_without_random_effects(
    data: DataSet, L: np.ndarray, U: np.ndarray | None
) -> np.ndarray:
    """L - ZU, falling back to L when there is no random-effect design."""
    L = np.asarray(L, dtype=float)
    if data.Z is None or U is None:
        return L
    return L - data.Z @ np.asarray(U, dtype=float)


def active_quadform(data: DataSet, gamma: GammaMask, resid: np.ndarray) -> float:
    """resid' P_gamma resid for the projection onto the active columns.

    Evaluated as the squared norm of a triangular solve against the
    active Gram Cholesky factor.
    """
    chol = _gram_cholesky(data.X, gamma.indices)
    v = data.X.take(gamma.indices, axis=1).T @ resid
    w, _ = dtrtrs(chol, v, lower=1)
    return float(w @ w)


def beta_posterior(
    data: DataSet,
    gamma: GammaMask,
    L: np.ndarray,
    U: np.ndarray | None,
    c: float,
) -> BetaPosterior:
    """Mean and covariance of the active-coefficient full conditional.

    mean = V X_active'(L - ZU) and cov = V = c/(1+c) (X_active'X_active)^-1,
    both obtained from Cholesky solves (no explicit inverse of the
    design itself).
    """
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    idx = gamma.indices
    chol = _gram_cholesky(data.X, idx)
    resid = residual_without_random_effects(data, L, U)
    shrink = c / (1.0 + c)
    xtr = data.X.take(idx, axis=1).T @ resid
    mean = shrink * cho_solve((chol, True), xtr)
    cov = shrink * cho_solve((chol, True), np.eye(idx.size))
    cov = 0.5 * (cov + cov.T)
    return BetaPosterior(mean=mean, cov=cov, chol_xtx=chol)


def u_posterior(
    data: DataSet,
    beta_full: np.ndarray,
    L: np.ndarray,
    D: np.ndarray,
) -> UPosterior:
    """Mean and covariance of the random-effect full conditional.

    cov = (Z'Z + D^-1)^-1 and mean = cov Z'(L - X beta), with X beta
    evaluated on the support of beta only.
    """
    if data.Z is None:
        raise ValueError("dataset has no random-effect design")
    chol_d = spd_cholesky(D, what="random-effect covariance D")
    d_inv = cho_solve((chol_d, True), np.eye(D.shape[0]))
    m = data.Z.T @ data.Z + d_inv
    chol_m = spd_cholesky(0.5 * (m + m.T), what="Z'Z + D^-1")
    support = np.flatnonzero(beta_full)
    xb = data.X.take(support, axis=1) @ np.asarray(beta_full, float)[support]
    mean = cho_solve((chol_m, True), data.Z.T @ (np.asarray(L, float) - xb))
    cov = cho_solve((chol_m, True), np.eye(m.shape[0]))
    cov = 0.5 * (cov + cov.T)
    return UPosterior(mean=mean, cov=cov)


def latent_from_means(rng: RngHandle, means: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Truncated-normal liabilities for given linear predictors.

    y = 1 wants L > 0 and y = 0 wants L < 0: draw a lower-truncated
    standard normal on the reflected axis and map back.
    """
    if not np.isfinite(means).all():
        raise ValueError("non-finite latent linear predictor")
    sign = 2.0 * np.asarray(y, dtype=float) - 1.0
    w = standard_normal_lower_tail(rng, -sign * means)
    return means + sign * w


def sample_latent(
    rng: RngHandle,
    data: DataSet,
    beta_full: np.ndarray,
    U: np.ndarray | None,
) -> np.ndarray:
    """Draw the latent liabilities given coefficients.

    Each L_i is N(X_i'beta + Z_i'U, 1) truncated to the side of zero
    matching y_i, so sign(L_i) always agrees with the outcome.
    """
    beta_full = np.asarray(beta_full, dtype=float)
    support = np.flatnonzero(beta_full)
    means = data.X.take(support, axis=1) @ beta_full[support]
    if data.Z is not None and U is not None:
        means = means + data.Z @ np.asarray(U, dtype=float)
    return latent_from_means(rng, means, data.y)


def update_covariance(
    rng: RngHandle, U: np.ndarray, cov_spec: CovarianceStructure
) -> np.ndarray:
    """Draw the random-effect covariance D from its full conditional.

    One vector observation of U feeds the update, so Inverse-Wishart
    blocks gain a single degree of freedom (prior dof m -> m + 1) and
    isotropic blocks follow IG(q_l/2 + shape, U_l'U_l/2 + scale).
    """
    U = np.asarray(U, dtype=float).reshape(-1)
    spec = cov_spec.resolve(U.size)
    if isinstance(spec, GeneralCov):
        return sample_inverse_wishart(rng, np.outer(U, U) + spec.scale_matrix, spec.dof + 1.0)
    if isinstance(spec, BlockDiagonalCov):
        D = np.zeros((U.size, U.size))
        start = 0
        for size, psi in zip(spec.block_sizes, spec.scale_matrices):
            u_l = U[start : start + size]
            D[start : start + size, start : start + size] = sample_inverse_wishart(
                rng, np.outer(u_l, u_l) + psi, spec.dof + 1.0
            )
            start += size
        return D
    if isinstance(spec, DiagonalCov):
        diag = np.empty(U.size)
        start = 0
        for size in spec.block_sizes:
            u_l = U[start : start + size]
            var = sample_inverse_gamma(
                rng, 0.5 * size + spec.shape, 0.5 * float(u_l @ u_l) + spec.scale
            )
            diag[start : start + size] = var
            start += size
        return np.diag(diag)
    raise TypeError(f"unknown covariance structure {type(cov_spec).__name__}")


def log_marginal_gamma(
    data: DataSet,
    gamma: GammaMask,
    L: np.ndarray,
    U: np.ndarray | None,
    hp: HyperParams,
) -> float:
    """Log of the coefficient-integrated mask density, up to a constant.

    With r = L - ZU and the active-column projection P:
    -(d/2) log(1+c) + c/(2(1+c)) r'Pr + d log(pi/(1-pi)).
    Terms shared by every mask (notably -r'r/2) are dropped.
    """
    resid = residual_without_random_effects(data, L, U)
    qf = active_quadform(data, gamma, resid)
    d = gamma.d
    log_odds = np.log(hp.include_prob) - np.log1p(-hp.include_prob)
    return -0.5 * d * np.log1p(hp.c) + g_quad_coef(hp.c) * qf + d * log_odds


def log_acceptance(
    data: DataSet,
    gamma_cur: GammaMask,
    gamma_prop: GammaMask,
    L: np.ndarray,
    U: np.ndarray | None,
    c: float,
) -> float:
    """Log Metropolis-Hastings acceptance for an equal-size swap proposal.

    min(0, c/(2(1+c)) r'(P_proposed - P_current) r); the prior and
    normalizing factors cancel because the proposal preserves the number
    of selected features.  A singular proposal raises
    :class:`SingularDesignError`; callers treat it as -inf (auto-reject).
    """
    if gamma_cur.d != gamma_prop.d:
        raise ValueError(
            f"swap proposal must preserve the selected count: "
            f"{gamma_cur.d} != {gamma_prop.d}"
        )
    resid = residual_without_random_effects(data, L, U)
    qf_cur = active_quadform(data, gamma_cur, resid)
    qf_prop = active_quadform(data, gamma_prop, resid)
    return min(0.0, g_quad_coef(c) * (qf_prop - qf_cur))
