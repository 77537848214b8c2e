"""The swap proposal, the inner Metropolis-Hastings loop over masks, and
the full grouped Metropolis-within-Gibbs chain.

Per Gibbs iteration the chain updates, in this order: the mask from its
coefficient-integrated conditional (inner MH sweep at frozen latents and
random effects), then the active coefficients under the fresh mask, the
random-effect covariance, the latent liabilities, and the random
effects.  Sampling the mask strictly before its coefficients is what
makes the (coefficients, mask) block a valid grouped update.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve
from scipy.linalg.lapack import dpotrf, dtrtrs

from .conditionals import g_quad_coef, latent_from_means, update_covariance
from .data import DataSet
from .errors import SingularDesignError
from .params import (
    MODE_FIXED,
    MODE_MIXED,
    ChainState,
    GammaMask,
    HyperParams,
    hp_from_dict,
    hp_to_dict,
)
from .rng import RngHandle, spd_cholesky

# Above this many features the full p x p Gram matrix is not cached and
# active Gram matrices are rebuilt from design columns per proposal.
GRAM_CACHE_LIMIT = 2048

REPORT_FORMAT = "probitsel.run_report"
REPORT_VERSION = 1


@dataclass
class Traces:
    """Per-iteration diagnostics (one entry per Gibbs iteration)."""

    d_diag_sum: np.ndarray
    beta_norm: np.ndarray
    log_marginal: np.ndarray


@dataclass
class PosteriorMeans:
    """Post-burn-in averages, populated when requested (used by refits)."""

    beta: np.ndarray
    u: np.ndarray | None
    d_matrix: np.ndarray | None


@dataclass
class RunReport:
    """Outcome of one chain: selection counts and bookkeeping."""

    selection_counts: np.ndarray
    feature_names: tuple[str, ...]
    mh_accept_rate: float
    iterations: tuple[int, int]  # (burn_in, kept)
    wall_time: float
    config_echo: HyperParams
    traces: Traces | None = None
    posterior_means: PosteriorMeans | None = None
    final_state: ChainState | None = field(default=None, repr=False)

    @property
    def kept(self) -> int:
        return self.iterations[1]


def _distinct_integers(gen: np.random.Generator, bound: int, k: int) -> np.ndarray:
    """k distinct uniform integers in [0, bound), cheap for k << bound."""
    if k >= bound:
        return np.arange(bound)
    if 2 * k > bound:
        return gen.permutation(bound)[:k]
    while True:
        cand = gen.integers(0, bound, size=k)
        if np.unique(cand).size == k:
            return cand


def _active_gram(X: np.ndarray, xtx: np.ndarray | None, idx: np.ndarray) -> np.ndarray:
    if xtx is not None:
        return xtx.take(idx, axis=0).take(idx, axis=1)
    cols = X.take(idx, axis=1)
    return cols.T @ cols


def _mh_sweep(
    gen: np.random.Generator,
    X: np.ndarray,
    xtx: np.ndarray | None,
    xtr: np.ndarray,
    ones: np.ndarray,
    zeros: np.ndarray,
    k: int,
    half_swap: int,
    coef: float,
):
    """Run k swap-proposal MH steps against the integrated mask density.

    ``ones``/``zeros`` are the current active/inactive column indices;
    ``xtr`` is X'(L - ZU) for the frozen latents.  Returns the updated
    index sets, the acceptance count, and the Cholesky factor plus
    half-solved projection vector of the final state (reused by the
    coefficient draw).  Hot path: raw LAPACK, no allocations beyond the
    per-proposal gather.
    """
    gram = _active_gram(X, xtx, ones)
    chol, info = dpotrf(gram, lower=1, clean=1)
    if info != 0:
        raise SingularDesignError(
            "current mask has a singular active design", indices=ones
        )
    w, _ = dtrtrs(chol, xtr[ones], lower=1)
    qf = float(w @ w)
    accepts = 0
    if k <= 0 or zeros.size == 0 or half_swap == 0:
        return ones, zeros, accepts, chol, w

    single = half_swap == 1
    if single:
        pick_one = gen.integers(0, ones.size, size=k)
        pick_zero = gen.integers(0, zeros.size, size=k)
        log_u = np.log1p(-gen.random(size=k))
    for step in range(k):
        if single:
            i = pick_one[step]
            j = pick_zero[step]
            proposal = ones.copy()
            proposal[i] = zeros[j]
            lu = log_u[step]
        else:
            i = _distinct_integers(gen, ones.size, half_swap)
            j = _distinct_integers(gen, zeros.size, half_swap)
            proposal = ones.copy()
            proposal[i] = zeros[j]
            lu = np.log1p(-gen.random())
        gram_p = _active_gram(X, xtx, proposal)
        chol_p, info = dpotrf(gram_p, lower=1, clean=1)
        if info != 0:
            continue  # singular proposal: log-acceptance -inf, auto-reject
        w_p, _ = dtrtrs(chol_p, xtr[proposal], lower=1)
        qf_p = float(w_p @ w_p)
        if coef * (qf_p - qf) >= lu:
            removed = ones[i]
            ones = proposal
            zeros[j] = removed
            chol, w, qf = chol_p, w_p, qf_p
            accepts += 1
    return ones, zeros, accepts, chol, w


def propose_swap(rng: RngHandle, gamma: GammaMask, swap_size: int) -> GammaMask:
    """Symmetric fixed-size swap proposal.

    Turns swap_size/2 uniformly chosen active components off and the
    same number of inactive components on, preserving the selected
    count; the kernel is symmetric by construction.
    """
    if swap_size < 2 or swap_size % 2 != 0:
        raise ValueError(f"swap_size must be a positive even integer, got {swap_size}")
    half = swap_size // 2
    ones = gamma.indices
    zeros = np.setdiff1d(np.arange(gamma.p), ones, assume_unique=True)
    if half > ones.size or half > zeros.size:
        raise ValueError(
            f"cannot swap {half} components with {ones.size} selected and "
            f"{zeros.size} unselected features"
        )
    drop = rng.gen.choice(ones.size, size=half, replace=False)
    add = rng.gen.choice(zeros.size, size=half, replace=False)
    bits = np.array(gamma.bits, dtype=np.uint8)
    bits[ones[drop]] = 0
    bits[zeros[add]] = 1
    return GammaMask(bits)


def mh_gamma_step(
    rng: RngHandle,
    data: DataSet,
    gamma_init: GammaMask,
    L: np.ndarray,
    U: np.ndarray | None,
    hp: HyperParams,
) -> GammaMask:
    """Run hp.mh_iters MH steps at frozen (L, U), returning the final mask.

    Proposals with a singular active design are rejected outright; a
    singular initial mask is an error.
    """
    ones = gamma_init.indices.copy()
    zeros = np.setdiff1d(np.arange(gamma_init.p), ones, assume_unique=True)
    if zeros.size == 0:
        return gamma_init  # degenerate one-point mask space
    half = hp.swap_size // 2
    if half > ones.size or half > zeros.size:
        raise ValueError(
            f"swap_size/2 = {half} does not fit the {ones.size} selected / "
            f"{zeros.size} unselected split"
        )
    resid = L if (data.Z is None or U is None) else L - data.Z @ np.asarray(U, float)
    xtr = data.X.T @ resid
    xtx = data.X.T @ data.X if data.p <= GRAM_CACHE_LIMIT else None
    ones, _, _, _, _ = _mh_sweep(
        rng.gen, data.X, xtx, xtr, ones, zeros, hp.mh_iters, half, g_quad_coef(hp.c)
    )
    return GammaMask.from_indices(ones, data.p)


def _initial_state(
    rng: RngHandle,
    data: DataSet,
    hp: HyperParams,
    d: int,
    fixed_gamma: GammaMask | None,
    use_z: bool,
):
    """Dispersed-but-valid start: random mask, zero coefficients, unit
    covariance, latents drawn under the zero predictor."""
    if fixed_gamma is not None:
        ones = fixed_gamma.indices.copy()
    else:
        ones = np.sort(rng.gen.choice(data.p, size=d, replace=False))
    q = data.q
    U = np.zeros(q) if use_z else None
    D = np.eye(q) if use_z else None
    L = latent_from_means(rng, np.zeros(data.n), data.y)
    return ones, np.zeros(d), D, L, U


def run_chain(
    data: DataSet,
    hp: HyperParams,
    init: ChainState | None = None,
    *,
    stream_id: int = 0,
    fixed_gamma: GammaMask | None = None,
    collect_traces: bool = False,
    collect_posterior: bool = False,
) -> RunReport:
    """Execute the grouped Metropolis-within-Gibbs chain.

    In ``fixed_effects_only`` mode the covariance and random-effect
    updates are skipped and ZU is identically zero.  With
    ``fixed_gamma`` the mask never moves (no MH sweep); this is the
    refit path.  Deterministic given (data, hp, stream_id).
    """
    start = time.perf_counter()
    use_z = hp.mode == MODE_MIXED
    if use_z and data.Z is None:
        raise ValueError(
            "mixed mode needs a random-effect design; load a group column "
            "or use fixed_effects_only mode"
        )
    n, p = data.n, data.p

    if fixed_gamma is not None:
        if fixed_gamma.p != p:
            raise ValueError(f"fixed mask is over {fixed_gamma.p} features, data has {p}")
        d = fixed_gamma.d
        if d >= n:
            raise ValueError(f"fixed mask selects {d} features; must be below n = {n}")
    else:
        hp.check_against(n, p)
        d = hp.num_selected

    rng = RngHandle(hp.seed, stream_id)
    q = data.q

    if init is not None:
        if init.gamma.p != p or init.gamma.d != d:
            raise ValueError("initial mask does not match the configuration")
        if fixed_gamma is not None and not np.array_equal(
            init.gamma.indices, fixed_gamma.indices
        ):
            raise ValueError("initial mask differs from the frozen mask")
        ones = init.gamma.indices.copy()
        beta_val = np.asarray(init.beta_gamma, float).copy()
        if beta_val.shape != (d,):
            raise ValueError(f"beta_gamma must have length {d}")
        L = np.asarray(init.L, float).copy()
        if not ((L > 0) == (data.y == 1)).all():
            raise ValueError("initial latents disagree with outcomes in sign")
        U = np.asarray(init.U, float).copy() if use_z else None
        D = np.asarray(init.D, float).copy() if use_z else None
        if use_z:
            spd_cholesky(D, what="initial D")
    else:
        ones, beta_val, D, L, U = _initial_state(rng, data, hp, d, fixed_gamma, use_z)

    zeros = np.setdiff1d(np.arange(p), ones, assume_unique=True)
    X = data.X
    Z = data.Z if use_z else None
    xtx = X.T @ X if p <= GRAM_CACHE_LIMIT else None
    ztz = Z.T @ Z if use_z else None
    cov_spec = hp.cov.resolve(q) if use_z else None
    coef = g_quad_coef(hp.c)
    shrink = hp.c / (1.0 + hp.c)
    sqrt_shrink = np.sqrt(shrink)
    half = hp.swap_size // 2
    y_is_one = data.y == 1
    gen = rng.gen

    frozen_chol = None
    if fixed_gamma is not None:
        gram = _active_gram(X, xtx, ones)
        frozen_chol, info = dpotrf(gram, lower=1, clean=1)
        if info != 0:
            raise SingularDesignError("frozen mask has a singular design", indices=ones)

    counts = np.zeros(p, dtype=np.int64)
    kept = hp.total_iters - hp.burn_in
    accepts = 0
    proposals = 0
    log_odds = np.log(hp.include_prob) - np.log1p(-hp.include_prob)
    lm_const = -0.5 * d * np.log1p(hp.c) + d * log_odds

    if collect_traces:
        tr_d = np.zeros(hp.total_iters)
        tr_beta = np.zeros(hp.total_iters)
        tr_lm = np.zeros(hp.total_iters)
    if collect_posterior:
        beta_sum = np.zeros(p)
        u_sum = np.zeros(q) if use_z else None
        d_sum = np.zeros((q, q)) if use_z else None

    for t in range(1, hp.total_iters + 1):
        resid = L - Z @ U if use_z else L
        xtr = X.T @ resid

        # 1. mask from its coefficient-integrated conditional
        if fixed_gamma is None:
            ones, zeros, acc, chol, w = _mh_sweep(
                gen, X, xtx, xtr, ones, zeros, hp.mh_iters, half, coef
            )
            accepts += acc
            proposals += hp.mh_iters
        else:
            chol = frozen_chol
            w, _ = dtrtrs(chol, xtr[ones], lower=1)

        # 2. active coefficients under the mask just drawn
        noise = gen.standard_normal(d)
        solved, _ = dtrtrs(chol, np.column_stack((w, noise)), lower=1, trans=1)
        beta_val = shrink * solved[:, 0] + sqrt_shrink * solved[:, 1]

        # 3. random-effect covariance
        if use_z:
            D = update_covariance(rng, U, cov_spec)

        # 4. latents under the new coefficients, previous random effects
        xb = X.take(ones, axis=1) @ beta_val
        means = xb + Z @ U if use_z else xb
        L = latent_from_means(rng, means, data.y)

        # 5. random effects last, under the fresh latents and covariance
        if use_z:
            chol_d = spd_cholesky(D, what="sampled D")
            d_inv = cho_solve((chol_d, True), np.eye(q))
            m_mat = ztz + d_inv
            chol_m, info = dpotrf(0.5 * (m_mat + m_mat.T), lower=1, clean=1)
            if info != 0:
                raise SingularDesignError("Z'Z + D^-1 not positive definite")
            mean_u = cho_solve((chol_m, True), Z.T @ (L - xb))
            u_noise, _ = dtrtrs(chol_m, gen.standard_normal(q), lower=1, trans=1)
            U = mean_u + u_noise

        if not ((L > 0) == y_is_one).all():
            raise RuntimeError("latent sign invariant violated")

        if collect_traces:
            tr_d[t - 1] = float(np.trace(D)) if use_z else 0.0
            tr_beta[t - 1] = float(np.linalg.norm(beta_val))
            tr_lm[t - 1] = lm_const + coef * float(w @ w)

        if t > hp.burn_in:
            counts[ones] += 1
            if collect_posterior:
                beta_sum[ones] += beta_val
                if use_z:
                    u_sum += U
                    d_sum += D

    traces = (
        Traces(d_diag_sum=tr_d, beta_norm=tr_beta, log_marginal=tr_lm)
        if collect_traces
        else None
    )
    posterior = None
    if collect_posterior:
        posterior = PosteriorMeans(
            beta=beta_sum / kept,
            u=u_sum / kept if use_z else None,
            d_matrix=d_sum / kept if use_z else None,
        )
    final = ChainState(
        gamma=GammaMask.from_indices(ones, p),
        beta_gamma=beta_val,
        D=D if use_z else None,
        L=L,
        U=U if use_z else None,
    )
    return RunReport(
        selection_counts=counts,
        feature_names=data.feature_names,
        mh_accept_rate=(accepts / proposals) if proposals else 0.0,
        iterations=(hp.burn_in, kept),
        wall_time=time.perf_counter() - start,
        config_echo=hp,
        traces=traces,
        posterior_means=posterior,
        final_state=final,
    )


def report_to_dict(report: RunReport, manifest_digest: str | None = None) -> dict:
    """Serializable form of a report; excludes wall time so reruns with an
    identical configuration produce byte-identical files."""
    payload = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "seed": report.config_echo.seed,
        "config": hp_to_dict(report.config_echo),
        "iterations": {"burn_in": report.iterations[0], "kept": report.iterations[1]},
        "mh_accept_rate": report.mh_accept_rate,
        "selection_counts": {
            name: int(count)
            for name, count in zip(report.feature_names, report.selection_counts)
        },
    }
    if manifest_digest is not None:
        payload["manifest_digest"] = manifest_digest
    return payload


def save_run_report(report: RunReport, path, manifest_digest: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report, manifest_digest), fh, indent=2, sort_keys=False)
        fh.write("\n")


def load_run_report(path) -> RunReport:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != REPORT_FORMAT:
        raise ValueError(f"{path}: not a run report file")
    if payload.get("version") != REPORT_VERSION:
        raise ValueError(f"{path}: unsupported report version {payload.get('version')}")
    counts_map = payload["selection_counts"]
    names = tuple(counts_map.keys())
    counts = np.array([counts_map[k] for k in names], dtype=np.int64)
    hp = hp_from_dict(payload["config"])
    iters = payload["iterations"]
    return RunReport(
        selection_counts=counts,
        feature_names=names,
        mh_accept_rate=float(payload.get("mh_accept_rate", 0.0)),
        iterations=(int(iters["burn_in"]), int(iters["kept"])),
        wall_time=0.0,
        config_echo=hp,
    )
