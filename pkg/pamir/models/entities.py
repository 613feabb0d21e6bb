"""Numeric domain types shared by every service.

All types are frozen dataclasses over numpy arrays. Validation happens in
``__post_init__`` and raises :class:`PamirError` so callers see the same error
vocabulary whether the input came from a file or from code.
"""
from dataclasses import InitVar, dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg

from pamir.core.errors import ErrorCode, PamirError
from pamir.schemas.schemas import BasisSpec, EMIterationRecord

CONSTRAINT_TOL = 1e-8
RANK_TOL = 1e-10


def _require_finite(name: str, a: np.ndarray) -> None:
    if not np.all(np.isfinite(a)):
        raise PamirError(ErrorCode.DOMAIN_ERROR, f"{name} has non-finite entries")


@dataclass(frozen=True, eq=False)
class CountVector:
    counts: np.ndarray
    library_size: int = field(init=False)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size < 2:
            raise PamirError(ErrorCode.DIMENSION_MISMATCH, "counts must be a vector with at least 2 taxa")
        if not np.all(np.equal(np.mod(counts, 1), 0)):
            raise PamirError(ErrorCode.DOMAIN_ERROR, "counts must be integers")
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            bad = int(np.flatnonzero(counts < 0)[0])
            raise PamirError(ErrorCode.DOMAIN_ERROR, f"negative count at index {bad}")
        total = int(counts.sum())
        if total < 1:
            raise PamirError(ErrorCode.DOMAIN_ERROR, "library size must be >= 1 (all counts are zero)")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "library_size", total)

    @property
    def p(self) -> int:
        return self.counts.size


@dataclass(frozen=True, eq=False)
class Composition:
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size < 2:
            raise PamirError(ErrorCode.DIMENSION_MISMATCH, "composition must be a vector with at least 2 parts")
        if np.any(~(probs > 0)):
            bad = int(np.flatnonzero(~(probs > 0))[0])
            raise PamirError(ErrorCode.DOMAIN_ERROR, f"composition entry {bad} is not strictly positive")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise PamirError(ErrorCode.DOMAIN_ERROR, f"composition sums to {probs.sum():.17g}, not 1")
        object.__setattr__(self, "probs", probs)


@dataclass(frozen=True, eq=False)
class LatentVector:
    w: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        _require_finite("latent vector", w)
        object.__setattr__(self, "w", w)


@dataclass(frozen=True, eq=False)
class BasisVector:
    h: np.ndarray
    centered: bool = False

    def __post_init__(self):
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        _require_finite("basis vector", h)
        object.__setattr__(self, "h", h)


@dataclass(frozen=True, eq=False)
class ReducedVector:
    u: np.ndarray

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.u, dtype=float))
        _require_finite("reduced vector", u)
        object.__setattr__(self, "u", u)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """theta = {mu, Gamma, beta, Sigma} with Gamma^T Sigma^-1 Gamma = I_d."""

    mu: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray
    strict: InitVar[bool] = True

    def __post_init__(self, strict: bool):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        gamma = np.asarray(self.gamma, dtype=float)
        if gamma.ndim == 1:
            gamma = gamma.reshape(-1, 1)
        beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        k = mu.size
        if gamma.shape[0] != k or sigma.shape != (k, k) or beta.shape[0] != gamma.shape[1]:
            raise PamirError(
                ErrorCode.DIMENSION_MISMATCH,
                f"inconsistent shapes: mu {mu.shape}, gamma {gamma.shape}, beta {beta.shape}, sigma {sigma.shape}",
            )
        for name, a in (("mu", mu), ("gamma", gamma), ("beta", beta), ("sigma", sigma)):
            _require_finite(name, a)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sigma", sigma)
        if strict:
            self.validate()

    @property
    def k(self) -> int:
        return self.mu.size

    @property
    def p(self) -> int:
        return self.mu.size + 1

    @property
    def d(self) -> int:
        return self.gamma.shape[1]

    @property
    def r(self) -> int:
        return self.beta.shape[1]

    def validate(self) -> None:
        if self.d > min(self.k, self.r):
            raise PamirError(
                ErrorCode.CONSTRAINT_VIOLATION,
                f"d = {self.d} exceeds min(p-1, r) = {min(self.k, self.r)}",
            )
        if not np.allclose(self.sigma, self.sigma.T, rtol=0, atol=1e-12 * max(1.0, np.abs(self.sigma).max())):
            raise PamirError(ErrorCode.NOT_POSITIVE_DEFINITE, "sigma is not symmetric")
        if np.linalg.eigvalsh(self.sigma).min() <= 0:
            raise PamirError(ErrorCode.NOT_POSITIVE_DEFINITE, "sigma is not positive definite")
        err = self.constraint_error()
        if err > CONSTRAINT_TOL:
            raise PamirError(
                ErrorCode.CONSTRAINT_VIOLATION,
                f"Gamma^T Sigma^-1 Gamma deviates from I_d by {err:.3e} (Frobenius)",
            )
        sv = np.linalg.svd(self.beta, compute_uv=False)
        if sv.size == 0 or sv.min() <= RANK_TOL * max(sv.max(), np.finfo(float).tiny):
            raise PamirError(ErrorCode.CONSTRAINT_VIOLATION, f"beta does not have rank d = {self.d}")

    @cached_property
    def sigma_cholesky(self) -> Tuple[np.ndarray, bool]:
        try:
            return linalg.cho_factor(self.sigma, lower=True)
        except linalg.LinAlgError as e:
            raise PamirError(ErrorCode.NOT_POSITIVE_DEFINITE, "sigma is not positive definite") from e

    @cached_property
    def sigma_logdet(self) -> float:
        c, _ = self.sigma_cholesky
        return float(2.0 * np.log(np.diag(c)).sum())

    @cached_property
    def precision(self) -> np.ndarray:
        inv = linalg.cho_solve(self.sigma_cholesky, np.eye(self.k))
        return 0.5 * (inv + inv.T)

    @cached_property
    def reduction(self) -> np.ndarray:
        """Gamma^T Sigma^-1, the d x (p-1) sufficient-reduction matrix."""
        return linalg.cho_solve(self.sigma_cholesky, self.gamma).T

    @cached_property
    def coefficient(self) -> np.ndarray:
        """Gamma beta, the (p-1) x r inverse-regression coefficient."""
        return self.gamma @ self.beta

    def constraint_error(self) -> float:
        c = self.gamma.T @ linalg.cho_solve(self.sigma_cholesky, self.gamma)
        return float(np.linalg.norm(c - np.eye(self.d), ord="fro"))

    def latent_mean(self, h: np.ndarray) -> np.ndarray:
        """mu + Gamma beta h; h may be (r,) or (n, r)."""
        return self.mu + np.asarray(h, dtype=float) @ self.coefficient.T

    @classmethod
    def normalized(cls, mu, gamma, beta, sigma, strict: bool = True) -> "ModelParams":
        """Rescale (Gamma, beta) onto Gamma^T Sigma^-1 Gamma = I_d, keeping Gamma beta fixed."""
        gamma = np.asarray(gamma, dtype=float)
        if gamma.ndim == 1:
            gamma = gamma.reshape(-1, 1)
        beta = np.atleast_2d(np.asarray(beta, dtype=float))
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        g = gamma.T @ np.linalg.solve(sigma, gamma)
        vals, vecs = np.linalg.eigh(0.5 * (g + g.T))
        if vals.min() <= 0:
            raise PamirError(ErrorCode.CONSTRAINT_VIOLATION, "gamma is rank deficient under sigma")
        root = (vecs * np.sqrt(vals)) @ vecs.T
        inv_root = (vecs / np.sqrt(vals)) @ vecs.T
        return cls(mu=mu, gamma=gamma @ inv_root, beta=root @ beta, sigma=sigma, strict=strict)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Paired observations (y_i, x_i) with centered bases h_i stored row-wise (n x r)."""

    responses: np.ndarray
    counts: np.ndarray
    basis_spec: BasisSpec
    basis_offset: np.ndarray
    bases: np.ndarray
    taxa: Tuple[str, ...] = ()
    sample_ids: Tuple[str, ...] = ()
    gram_condition: float = field(init=False)

    def __post_init__(self):
        responses = np.asarray(self.responses, dtype=float).ravel()
        counts = np.atleast_2d(np.asarray(self.counts))
        bases = np.asarray(self.bases, dtype=float)
        if bases.ndim == 1:
            bases = bases.reshape(-1, 1)
        n = responses.size
        if n < 2:
            raise PamirError(ErrorCode.VALIDATION_ERROR, f"a dataset needs n >= 2 observations, got {n}")
        if counts.shape[0] != n or bases.shape[0] != n:
            raise PamirError(
                ErrorCode.DIMENSION_MISMATCH,
                f"{n} responses but {counts.shape[0]} count rows and {bases.shape[0]} basis rows",
            )
        for i in range(n):
            try:
                CountVector(counts[i])
            except PamirError as e:
                raise PamirError(e.code, f"observation {i}: {e.message}") from e
        _require_finite("responses", responses)
        if np.abs(bases.sum(axis=0)).max() > 1e-10 * max(1.0, np.abs(bases).sum()):
            raise PamirError(ErrorCode.VALIDATION_ERROR, "bases are not centered over the training responses")
        taxa = tuple(self.taxa) or tuple(f"taxon_{j + 1}" for j in range(counts.shape[1]))
        sample_ids = tuple(self.sample_ids) or tuple(f"sample_{i + 1}" for i in range(n))
        if len(taxa) != counts.shape[1] or len(sample_ids) != n:
            raise PamirError(ErrorCode.DIMENSION_MISMATCH, "taxon or sample labels do not match the count matrix")
        object.__setattr__(self, "responses", responses)
        object.__setattr__(self, "counts", counts.astype(np.int64))
        object.__setattr__(self, "bases", bases)
        object.__setattr__(self, "basis_offset", np.atleast_1d(np.asarray(self.basis_offset, dtype=float)))
        object.__setattr__(self, "taxa", taxa)
        object.__setattr__(self, "sample_ids", sample_ids)
        object.__setattr__(self, "gram_condition", float(np.linalg.cond(self.gram)))

    @property
    def n(self) -> int:
        return self.responses.size

    @property
    def p(self) -> int:
        return self.counts.shape[1]

    @property
    def r(self) -> int:
        return self.bases.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        """H H^T (r x r)."""
        return self.bases.T @ self.bases

    def count_vector(self, i: int) -> CountVector:
        return CountVector(self.counts[i])

    def basis_vectors(self) -> List[BasisVector]:
        return [BasisVector(h, centered=True) for h in self.bases]


@dataclass(frozen=True, eq=False)
class ChainOutput:
    samples: np.ndarray
    mean: np.ndarray
    second_moment: np.ndarray
    acceptance_rate: float
    final_state: np.ndarray
    proposal_scale: float
    n_nonfinite: int = 0

    @classmethod
    def from_samples(cls, samples: np.ndarray, **kwargs: Any) -> "ChainOutput":
        samples = np.asarray(samples, dtype=float)
        b = samples.shape[0]
        second = samples.T @ samples / b
        return cls(
            samples=samples,
            mean=samples.mean(axis=0),
            second_moment=0.5 * (second + second.T),
            **kwargs,
        )


@dataclass(frozen=True, eq=False)
class EStepStats:
    chain_means: np.ndarray
    chain_second_moments: np.ndarray
    grand_mean: np.ndarray
    acceptance_rates: np.ndarray
    final_states: np.ndarray
    samples: Optional[List[np.ndarray]] = None
    proposal_scales: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.chain_means.shape[0]

    @classmethod
    def from_chains(cls, chains: List[ChainOutput], keep_samples: bool = False) -> "EStepStats":
        means = np.stack([c.mean for c in chains])
        return cls(
            chain_means=means,
            chain_second_moments=np.stack([c.second_moment for c in chains]),
            grand_mean=means.mean(axis=0),
            acceptance_rates=np.array([c.acceptance_rate for c in chains]),
            final_states=np.stack([c.final_state for c in chains]),
            samples=[c.samples for c in chains] if keep_samples else None,
            proposal_scales=np.array([c.proposal_scale for c in chains]),
        )

    @classmethod
    def from_points(cls, latent: np.ndarray) -> "EStepStats":
        """Degenerate chains: each observation's latent vector is known exactly."""
        latent = np.atleast_2d(np.asarray(latent, dtype=float))
        return cls(
            chain_means=latent.copy(),
            chain_second_moments=np.einsum("ni,nj->nij", latent, latent),
            grand_mean=latent.mean(axis=0),
            acceptance_rates=np.ones(latent.shape[0]),
            final_states=latent.copy(),
            samples=[row[None, :] for row in latent],
        )


@dataclass(frozen=True, eq=False)
class FitResult:
    theta: ModelParams
    em_trace: List[EMIterationRecord]
    converged: bool
    iterations_used: int
    final_stats: Optional[EStepStats] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def final_delta(self) -> Optional[float]:
        return self.em_trace[-1].max_rel_change if self.em_trace else None

    @property
    def mean_acceptance(self) -> float:
        return self.em_trace[-1].mean_acceptance if self.em_trace else float("nan")


@dataclass(frozen=True, eq=False)
class PredictorState:
    theta: ModelParams
    training_responses: np.ndarray
    training_bases: np.ndarray
    basis_offset: np.ndarray
    basis_spec: BasisSpec
    reduction: np.ndarray = field(init=False)

    def __post_init__(self):
        responses = np.asarray(self.training_responses, dtype=float).ravel()
        bases = np.atleast_2d(np.asarray(self.training_bases, dtype=float))
        if responses.size < 1 or bases.shape != (responses.size, self.theta.r):
            raise PamirError(ErrorCode.DIMENSION_MISMATCH, "training bases do not match the fitted beta")
        reduction = self.theta.reduction
        err = float(np.linalg.norm(reduction @ self.theta.gamma - np.eye(self.theta.d), ord="fro"))
        if err > CONSTRAINT_TOL:
            raise PamirError(ErrorCode.CONSTRAINT_VIOLATION, f"reduction . Gamma deviates from I_d by {err:.3e}")
        object.__setattr__(self, "training_responses", responses)
        object.__setattr__(self, "training_bases", bases)
        object.__setattr__(self, "basis_offset", np.atleast_1d(np.asarray(self.basis_offset, dtype=float)))
        object.__setattr__(self, "reduction", reduction)

    @property
    def p(self) -> int:
        return self.theta.p

    @cached_property
    def u_means(self) -> np.ndarray:
        """Gamma^T Sigma^-1 mu + beta h_y for every training response (n x d)."""
        return self.reduction @ self.theta.mu + self.training_bases @ self.theta.beta.T

    @property
    def is_binary(self) -> bool:
        return bool(np.all(np.isin(self.training_responses, (0.0, 1.0))))


@dataclass(frozen=True, eq=False)
class PredictionResult:
    y_hat: float
    acceptance_rate: float
    n_fallback: int
    n_samples: int


@dataclass(frozen=True, eq=False)
class GeneratorRecord:
    gamma: np.ndarray
    sigma: np.ndarray
    train_latent: np.ndarray
    test_latent: np.ndarray
    train_compositions: np.ndarray
    test_compositions: np.ndarray
    train_v: np.ndarray
    test_v: np.ndarray
    warnings: List[str] = field(default_factory=list)
