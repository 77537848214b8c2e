"""Seedable random primitives used by the Gibbs machinery.

Every draw in a chain flows through an :class:`RngHandle`, a PCG64
generator keyed by ``(seed, stream_id)``.  Distinct stream ids give
statistically independent streams for the same seed, so concurrent
chains stay reproducible without sharing generator state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg.lapack import dpotrf, dtrtrs
from scipy.special import ndtr, ndtri

from .errors import NonSPDError

# Standardized truncation point beyond which the inverse-CDF loses
# accuracy and the exponential rejection sampler takes over.
TAIL_SWITCH = 4.0

LEFT_AT_0 = "left_at_0"
RIGHT_AT_0 = "right_at_0"


@dataclass
class RngHandle:
    """Deterministic random source for one chain.

    Identical ``(seed, stream_id, call sequence)`` yields identical
    draws.  Never share a handle between concurrently running chains;
    give each chain its own ``stream_id``.
    """

    seed: int
    stream_id: int = 0
    gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self.gen = np.random.Generator(np.random.PCG64(ss))


def spd_cholesky(mat: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor of an SPD matrix.

    Raises :class:`NonSPDError` carrying the 1-based index of the first
    failing leading minor when the factorization breaks down.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{what} must be square, got shape {mat.shape}")
    if mat.size and not np.isfinite(mat).all():
        raise ValueError(f"{what} contains non-finite entries")
    scale = max(1.0, float(np.max(np.abs(mat)))) if mat.size else 1.0
    if float(np.max(np.abs(mat - mat.T), initial=0.0)) > 1e-10 * scale:
        raise ValueError(f"{what} is not symmetric")
    chol, info = dpotrf(mat, lower=1, clean=1)
    if info > 0:
        raise NonSPDError(
            f"{what} is not positive definite "
            f"(leading minor {info} is not positive)",
            leading_minor=int(info),
        )
    if info < 0:
        raise ValueError(f"illegal value in argument {-info} of Cholesky")
    return chol


def _tail_rejection(gen: np.random.Generator, lower: np.ndarray) -> np.ndarray:
    """Standard normal draws conditioned on exceeding deep lower bounds.

    Exponential-proposal rejection sampler; acceptance approaches one as
    the bound moves further into the tail, so the loop terminates fast.
    """
    out = np.empty_like(lower)
    pending = np.arange(lower.size)
    alpha = 0.5 * (lower + np.sqrt(lower * lower + 4.0))
    while pending.size:
        a = lower[pending]
        al = alpha[pending]
        # 1 - U in (0, 1] keeps both logs finite
        z = a - np.log1p(-gen.random(pending.size)) / al
        log_accept = -0.5 * (z - al) ** 2
        keep = np.log1p(-gen.random(pending.size)) <= log_accept
        out[pending[keep]] = z[keep]
        pending = pending[~keep]
    return out


def standard_normal_lower_tail(rng: RngHandle, lower: np.ndarray) -> np.ndarray:
    """Vector of N(0, 1) draws conditioned on ``draw > lower`` elementwise.

    Inverse-CDF for bounds up to ``TAIL_SWITCH``, exponential rejection
    beyond; every returned value strictly exceeds its bound, even when
    rounding would collapse the inverse-CDF onto the bound itself.
    """
    lower = np.asarray(lower, dtype=float)
    if lower.size and not np.isfinite(lower).all():
        raise ValueError("non-finite truncation bound")
    gen = rng.gen
    out = np.empty_like(lower)
    easy = lower <= TAIL_SWITCH
    if easy.any():
        a = lower[easy]
        v = 1.0 - gen.random(a.shape)  # in (0, 1]
        out[easy] = -ndtri(v * ndtr(-a))
    hard = ~easy
    if hard.any():
        out[hard] = _tail_rejection(gen, lower[hard])
    return np.maximum(out, np.nextafter(lower, np.inf))


def sample_truncated_normal(rng: RngHandle, mean: float, side: str) -> float:
    """One draw from N(mean, 1) restricted to one side of zero.

    ``side`` is ``"left_at_0"`` for support (0, inf) or ``"right_at_0"``
    for support (-inf, 0).  Valid deep into the tails: a mean of -30
    with ``left_at_0`` still returns a finite positive draw.
    """
    mean = float(mean)
    if not np.isfinite(mean):
        raise ValueError("truncated normal mean must be finite")
    if side == LEFT_AT_0:
        w = standard_normal_lower_tail(rng, np.array([-mean]))[0]
        return mean + w
    if side == RIGHT_AT_0:
        # reflect: -draw ~ N(-mean, 1) truncated to (0, inf)
        w = standard_normal_lower_tail(rng, np.array([mean]))[0]
        return mean - w
    raise ValueError(f"side must be {LEFT_AT_0!r} or {RIGHT_AT_0!r}, got {side!r}")


def sample_mvn(rng: RngHandle, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Draw from N(mean, cov) as mean + chol(cov) @ z."""
    mean = np.asarray(mean, dtype=float)
    chol = spd_cholesky(cov, what="covariance")
    if mean.shape != (chol.shape[0],):
        raise ValueError(
            f"mean has shape {mean.shape}, covariance is {chol.shape[0]}x{chol.shape[0]}"
        )
    z = rng.gen.standard_normal(mean.size)
    return mean + chol @ z


def sample_inverse_wishart(rng: RngHandle, scale: np.ndarray, dof: float) -> np.ndarray:
    """Draw from the Inverse-Wishart with the given scale matrix and dof.

    Samples W ~ Wishart(scale^-1, dof) through the Bartlett
    decomposition and returns W^-1, using triangular solves only: with
    scale = LL' and Bartlett factor A, the draw is TT' for T = L A^-T.
    """
    scale = np.asarray(scale, dtype=float)
    q = scale.shape[0]
    dof = float(dof)
    if dof <= q - 1:
        raise ValueError(f"Inverse-Wishart dof must exceed q - 1 = {q - 1}, got {dof}")
    chol_scale = spd_cholesky(scale, what="Inverse-Wishart scale")
    gen = rng.gen
    bartlett = np.zeros((q, q))
    # diagonal first, then the strict lower triangle row by row
    bartlett[np.diag_indices(q)] = np.sqrt(gen.chisquare(dof - np.arange(q)))
    if q > 1:
        bartlett[np.tril_indices(q, -1)] = gen.standard_normal(q * (q - 1) // 2)
    tt, info = dtrtrs(bartlett, chol_scale.T, lower=1)
    if info != 0:
        raise NonSPDError("degenerate Bartlett factor", leading_minor=int(info))
    draw = tt.T @ tt
    return 0.5 * (draw + draw.T)


def sample_inverse_gamma(rng: RngHandle, shape: float, scale: float) -> float:
    """Draw X with 1/X ~ Gamma(shape, rate=scale).

    Density proportional to x^(-shape-1) exp(-scale/x).
    """
    shape = float(shape)
    scale = float(scale)
    if shape <= 0 or scale <= 0:
        raise ValueError(f"inverse gamma needs shape > 0 and scale > 0, got ({shape}, {scale})")
    return scale / rng.gen.gamma(shape)
