"""Sampler configuration types: inclusion mask, covariance structure,
hyperparameters, and chain state."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .rng import RngHandle, spd_cholesky

MODE_MIXED = "mixed"
MODE_FIXED = "fixed_effects_only"


@dataclass(frozen=True)
class GammaMask:
    """Binary inclusion vector over the p candidate features.

    The number of ones is fixed by construction and stays constant for
    the whole chain (the swap proposal preserves it).
    """

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if not np.isin(bits, (0, 1)).all():
            raise ValueError("mask bits must be 0/1")
        bits = np.ascontiguousarray(bits.astype(np.uint8))
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)
        if self.d < 1:
            raise ValueError("mask must select at least one feature")

    @property
    def p(self) -> int:
        return self.bits.size

    @property
    def d(self) -> int:
        return int(self.bits.sum())

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    @classmethod
    def from_indices(cls, indices, p: int) -> "GammaMask":
        bits = np.zeros(p, dtype=np.uint8)
        bits[np.asarray(indices, dtype=np.int64)] = 1
        return cls(bits)

    @classmethod
    def random(cls, rng: RngHandle, p: int, d: int) -> "GammaMask":
        """Uniformly random mask with exactly d ones."""
        if not 1 <= d <= p:
            raise ValueError(f"need 1 <= d <= p, got d={d}, p={p}")
        idx = rng.gen.choice(p, size=d, replace=False)
        return cls.from_indices(idx, p)


def _as_scale_matrix(value, size: int) -> np.ndarray:
    """Identity by default; a scalar means that multiple of the identity."""
    if value is None:
        return np.eye(size)
    if np.isscalar(value):
        if float(value) <= 0:
            raise ValueError(f"scalar scale must be positive, got {value}")
        return float(value) * np.eye(size)
    return np.asarray(value, dtype=float)


@dataclass(frozen=True)
class GeneralCov:
    """Unstructured q x q covariance with an Inverse-Wishart prior.

    ``scale_matrix`` may be a full matrix, a positive scalar (that
    multiple of the identity), or None (identity); ``dof`` defaults to
    q + 2.  Everything is filled in by :meth:`resolve` once q is known.
    """

    scale_matrix: object = None
    dof: float | None = None

    def resolve(self, q: int) -> "GeneralCov":
        psi = _as_scale_matrix(self.scale_matrix, q)
        dof = float(q + 2) if self.dof is None else float(self.dof)
        if psi.shape != (q, q):
            raise ValueError(f"scale matrix must be {q}x{q}, got {psi.shape}")
        spd_cholesky(psi, what="Inverse-Wishart scale matrix")
        if dof <= q - 1:
            raise ValueError(f"dof must exceed q - 1 = {q - 1}, got {dof}")
        return GeneralCov(scale_matrix=psi, dof=dof)


@dataclass(frozen=True)
class BlockDiagonalCov:
    """Independent random effects: one Inverse-Wishart block per effect.

    ``scale_matrices`` may be a tuple of per-block matrices, a single
    positive scalar applied to every block, or None (identities).
    """

    block_sizes: tuple[int, ...] | None = None
    scale_matrices: object = None
    dof: float | None = None

    def resolve(self, q: int) -> "BlockDiagonalCov":
        sizes = (q,) if self.block_sizes is None else tuple(int(s) for s in self.block_sizes)
        if any(s < 1 for s in sizes) or sum(sizes) != q:
            raise ValueError(f"block sizes {sizes} must be positive and sum to q = {q}")
        if self.scale_matrices is None or np.isscalar(self.scale_matrices):
            psis = tuple(_as_scale_matrix(self.scale_matrices, s) for s in sizes)
        else:
            psis = tuple(np.asarray(m, float) for m in self.scale_matrices)
        if len(psis) != len(sizes):
            raise ValueError(f"{len(psis)} scale matrices for {len(sizes)} blocks")
        max_q = max(sizes)
        dof = float(max_q + 2) if self.dof is None else float(self.dof)
        for s, psi in zip(sizes, psis):
            if psi.shape != (s, s):
                raise ValueError(f"scale matrix shape {psi.shape} for block of size {s}")
            spd_cholesky(psi, what="Inverse-Wishart scale matrix")
            if dof <= s - 1:
                raise ValueError(f"dof must exceed {s - 1} for a block of size {s}, got {dof}")
        return BlockDiagonalCov(block_sizes=sizes, scale_matrices=psis, dof=dof)


@dataclass(frozen=True)
class DiagonalCov:
    """Isotropic blocks: one inverse-gamma variance per random effect.

    ``shape`` and ``scale`` parameterize the IG prior on each block
    variance (density proportional to v^(-shape-1) exp(-scale/v)).
    """

    shape: float = 2.0
    scale: float = 3.0
    block_sizes: tuple[int, ...] | None = None

    def resolve(self, q: int) -> "DiagonalCov":
        sizes = (q,) if self.block_sizes is None else tuple(int(s) for s in self.block_sizes)
        if any(s < 1 for s in sizes) or sum(sizes) != q:
            raise ValueError(f"block sizes {sizes} must be positive and sum to q = {q}")
        if self.shape <= 0 or self.scale <= 0:
            raise ValueError(f"need shape > 0 and scale > 0, got ({self.shape}, {self.scale})")
        return DiagonalCov(shape=float(self.shape), scale=float(self.scale), block_sizes=sizes)


CovarianceStructure = Union[GeneralCov, BlockDiagonalCov, DiagonalCov]


@dataclass(frozen=True)
class HyperParams:
    """All user-set knobs of the sampler.

    ``c`` is the g-prior variable selection coefficient,
    ``include_prob`` the common Bernoulli inclusion probability (it
    cancels out under the fixed-size swap proposal but is kept in the
    target density), ``num_selected`` the fixed number of active
    features per iteration, ``swap_size`` the (even) number of mask
    components exchanged per proposal, and ``mh_iters`` the inner
    Metropolis-Hastings iterations per Gibbs sweep.

    Checks that need the data (num_selected < n, swap bounds against p)
    run when a chain binds the parameters to a DataSet.
    """

    c: float = 50.0
    include_prob: float = 0.5
    num_selected: int = 30
    swap_size: int = 10
    mh_iters: int = 500
    total_iters: int = 60000
    burn_in: int = 30000
    seed: int = 0
    mode: str = MODE_MIXED
    cov: CovarianceStructure = field(default_factory=DiagonalCov)

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not 0.0 < self.include_prob < 1.0:
            raise ValueError(f"include_prob must be in (0, 1), got {self.include_prob}")
        if self.num_selected < 1:
            raise ValueError(f"num_selected must be >= 1, got {self.num_selected}")
        if self.swap_size < 2 or self.swap_size % 2 != 0:
            raise ValueError(f"swap_size must be a positive even integer, got {self.swap_size}")
        if self.swap_size // 2 > self.num_selected:
            raise ValueError(
                f"swap_size/2 = {self.swap_size // 2} exceeds num_selected = {self.num_selected}"
            )
        if self.mh_iters < 1:
            raise ValueError(f"mh_iters must be >= 1, got {self.mh_iters}")
        if self.total_iters < 1:
            raise ValueError(f"total_iters must be >= 1, got {self.total_iters}")
        if not 0 <= self.burn_in < self.total_iters:
            raise ValueError(
                f"burn_in must satisfy 0 <= burn_in < total_iters, got "
                f"{self.burn_in} / {self.total_iters}"
            )
        if self.mode not in (MODE_MIXED, MODE_FIXED):
            raise ValueError(f"mode must be {MODE_MIXED!r} or {MODE_FIXED!r}, got {self.mode!r}")

    def check_against(self, n: int, p: int) -> None:
        """Data-dependent invariants, enforced when a chain starts."""
        if self.num_selected >= n:
            raise ValueError(
                f"num_selected = {self.num_selected} must be below n = {n} "
                "(the active Gram matrix would be singular)"
            )
        if self.num_selected > p:
            raise ValueError(f"num_selected = {self.num_selected} exceeds p = {p}")
        if self.num_selected < p and self.swap_size // 2 > p - self.num_selected:
            raise ValueError(
                f"swap_size/2 = {self.swap_size // 2} exceeds the "
                f"{p - self.num_selected} unselected features"
            )

    def with_(self, **kwargs) -> "HyperParams":
        return replace(self, **kwargs)


@dataclass
class ChainState:
    """One point of the Gibbs sequence: (gamma, beta_gamma, D, L, U)."""

    gamma: GammaMask
    beta_gamma: np.ndarray
    D: np.ndarray | None
    L: np.ndarray
    U: np.ndarray | None


def cov_to_dict(cov: CovarianceStructure) -> dict:
    if isinstance(cov, GeneralCov):
        psi = cov.scale_matrix
        return {
            "kind": "general",
            "scale_matrix": psi
            if psi is None or np.isscalar(psi)
            else np.asarray(psi).tolist(),
            "dof": cov.dof,
        }
    if isinstance(cov, BlockDiagonalCov):
        mats = cov.scale_matrices
        return {
            "kind": "block",
            "block_sizes": None if cov.block_sizes is None else list(cov.block_sizes),
            "scale_matrices": mats
            if mats is None or np.isscalar(mats)
            else [np.asarray(m).tolist() for m in mats],
            "dof": cov.dof,
        }
    if isinstance(cov, DiagonalCov):
        return {
            "kind": "diagonal",
            "shape": cov.shape,
            "scale": cov.scale,
            "block_sizes": None if cov.block_sizes is None else list(cov.block_sizes),
        }
    raise TypeError(f"unknown covariance structure {type(cov).__name__}")


def cov_from_dict(payload: dict) -> CovarianceStructure:
    kind = payload.get("kind")
    if kind == "general":
        psi = payload.get("scale_matrix")
        if psi is not None and not np.isscalar(psi):
            psi = np.asarray(psi, float)
        return GeneralCov(scale_matrix=psi, dof=payload.get("dof"))
    if kind == "block":
        mats = payload.get("scale_matrices")
        sizes = payload.get("block_sizes")
        if mats is not None and not np.isscalar(mats):
            mats = tuple(np.asarray(m, float) for m in mats)
        return BlockDiagonalCov(
            block_sizes=None if sizes is None else tuple(int(s) for s in sizes),
            scale_matrices=mats,
            dof=payload.get("dof"),
        )
    if kind == "diagonal":
        sizes = payload.get("block_sizes")
        return DiagonalCov(
            shape=payload.get("shape", 2.0),
            scale=payload.get("scale", 3.0),
            block_sizes=None if sizes is None else tuple(int(s) for s in sizes),
        )
    raise ValueError(f"unknown covariance kind {kind!r}")


def hp_to_dict(hp: HyperParams) -> dict:
    return {
        "c": hp.c,
        "include_prob": hp.include_prob,
        "num_selected": hp.num_selected,
        "swap_size": hp.swap_size,
        "mh_iters": hp.mh_iters,
        "total_iters": hp.total_iters,
        "burn_in": hp.burn_in,
        "seed": hp.seed,
        "mode": hp.mode,
        "cov": cov_to_dict(hp.cov),
    }


def hp_from_dict(payload: dict) -> HyperParams:
    fields_ = dict(payload)
    cov = fields_.pop("cov", None)
    return HyperParams(
        cov=DiagonalCov() if cov is None else cov_from_dict(cov),
        **fields_,
    )
