"""ALR transform pair, multinomial-logit likelihood and the latent Gaussian density.

Arrays follow the convention that the last axis indexes taxa (length p) or
ALR coordinates (length p - 1). The reference category is the last taxon.
"""
import logging
from typing import List, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike
from scipy import linalg, special

from pamir.core.errors import ErrorCode, PamirError
from pamir.models.entities import BasisVector, Composition, CountVector, LatentVector, ModelParams
from pamir.schemas.schemas import BasisSpec

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))

CompositionLike = Union[Composition, ArrayLike]
LatentLike = Union[LatentVector, ArrayLike]
CountsLike = Union[CountVector, ArrayLike]
BasisLike = Union[BasisVector, ArrayLike]


def _as_array(value, attr: str) -> np.ndarray:
    if hasattr(value, attr):
        value = getattr(value, attr)
    return np.asarray(value, dtype=float)


def alr(z: CompositionLike) -> np.ndarray:
    z = _as_array(z, "probs")
    if z.shape[-1] < 2:
        raise PamirError(ErrorCode.DIMENSION_MISMATCH, "a composition needs at least 2 parts")
    bad = ~(z > 0)
    if bad.any():
        index = tuple(int(i) for i in np.argwhere(bad)[0])
        where = index[0] if len(index) == 1 else index
        raise PamirError(ErrorCode.DOMAIN_ERROR, f"alr is undefined: entry {where} is not strictly positive")
    logz = np.log(z)
    return logz[..., :-1] - logz[..., -1:]


def alr_inv(w: LatentLike) -> np.ndarray:
    """Inverse ALR; softmax over (w, 0) with max-subtraction so |w| > 700 is safe."""
    w = np.atleast_1d(_as_array(w, "w"))
    if not np.all(np.isfinite(w)):
        raise PamirError(ErrorCode.DOMAIN_ERROR, "alr_inv needs finite latent coordinates")
    padded = np.concatenate([w, np.zeros(w.shape[:-1] + (1,))], axis=-1)
    return special.softmax(padded, axis=-1)


def link_probs(intercepts: ArrayLike, gamma: ArrayLike, beta: ArrayLike, h: BasisLike) -> np.ndarray:
    """Multinomial-logit probabilities with a_p = 0 and gamma_p = 0."""
    a = np.atleast_1d(np.asarray(intercepts, dtype=float))
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim == 1:
        gamma = gamma.reshape(-1, 1)
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    h = np.atleast_1d(_as_array(h, "h"))
    if gamma.shape[0] != a.size or beta.shape[0] != gamma.shape[1] or beta.shape[1] != h.shape[-1]:
        raise PamirError(
            ErrorCode.DIMENSION_MISMATCH,
            f"link_probs shapes do not conform: a {a.shape}, gamma {gamma.shape}, beta {beta.shape}, h {h.shape}",
        )
    eta = a + h @ (gamma @ beta).T
    return alr_inv(eta)


def multinomial_logpmf(x: CountsLike, z: CompositionLike) -> float:
    """log of m! / prod x_j! * prod z_j^x_j; zero counts contribute nothing."""
    counts = x.counts if isinstance(x, CountVector) else np.asarray(x)
    probs = _as_array(z, "probs")
    if counts.shape != probs.shape:
        raise PamirError(
            ErrorCode.DIMENSION_MISMATCH,
            f"counts have {counts.shape[-1]} taxa but the composition has {probs.shape[-1]}",
        )
    counts = counts.astype(float)
    m = counts.sum(axis=-1)
    coef = special.gammaln(m + 1.0) - special.gammaln(counts + 1.0).sum(axis=-1)
    return coef + special.xlogy(counts, probs).sum(axis=-1)

# -------- Response basis

def _table_lookup(y: float, spec: BasisSpec) -> np.ndarray:
    for entry in spec.table:
        if np.isclose(entry.y, y, rtol=0.0, atol=1e-12):
            return np.asarray(entry.h, dtype=float)
    raise PamirError(ErrorCode.VALIDATION_ERROR, f"response {y!r} is not in the basis table")


def basis_matrix(ys: ArrayLike, spec: BasisSpec) -> np.ndarray:
    ys = np.atleast_1d(np.asarray(ys, dtype=float)).ravel()
    if spec.kind == "polynomial":
        if spec.degree < 1:
            raise PamirError(ErrorCode.VALIDATION_ERROR, f"basis degree must be >= 1, got {spec.degree}")
        return np.power.outer(ys, np.arange(1, spec.degree + 1, dtype=float))
    if spec.kind == "identity":
        return ys.reshape(-1, 1)
    return np.stack([_table_lookup(float(y), spec) for y in ys])


def basis(y: float, spec: BasisSpec) -> BasisVector:
    return BasisVector(basis_matrix([y], spec)[0], centered=False)


def center_basis(ys: ArrayLike, spec: BasisSpec) -> np.ndarray:
    """Offset that makes the training bases sum to zero."""
    return basis_matrix(ys, spec).mean(axis=0)


def centered_basis_matrix(
    ys: ArrayLike, spec: BasisSpec, offset: np.ndarray = None
) -> Tuple[np.ndarray, np.ndarray]:
    raw = basis_matrix(ys, spec)
    if offset is None:
        offset = raw.mean(axis=0)
    return raw - offset, np.asarray(offset, dtype=float)

# -------- Latent Gaussian layer

def latent_log_density(w: ArrayLike, means: ArrayLike, theta: ModelParams) -> np.ndarray:
    """N(means, Sigma) log-density via the cached Cholesky factor; broadcasts over leading axes."""
    diff = np.asarray(w, dtype=float) - np.asarray(means, dtype=float)
    lead = diff.shape[:-1]
    flat = diff.reshape(-1, theta.k)
    c, lower = theta.sigma_cholesky
    z = linalg.solve_triangular(c, flat.T, lower=lower, check_finite=False)
    quad = np.einsum("ij,ij->j", z, z)
    out = -0.5 * (theta.k * LOG_2PI + theta.sigma_logdet + quad)
    return out.reshape(lead) if lead else out[0]


def log_density_w_given_y(w: LatentLike, h: BasisLike, theta: ModelParams) -> float:
    w = np.atleast_1d(_as_array(w, "w"))
    h = np.atleast_1d(_as_array(h, "h"))
    if w.shape[-1] != theta.k or h.shape[-1] != theta.r:
        raise PamirError(
            ErrorCode.DIMENSION_MISMATCH,
            f"w has length {w.shape[-1]} (expected {theta.k}), h has length {h.shape[-1]} (expected {theta.r})",
        )
    return latent_log_density(w, theta.latent_mean(h), theta)

# -------- Preflight

def zero_count_taxa(counts: ArrayLike, taxa: Sequence[str] = ()) -> List[int]:
    """Indices of taxa that are zero in every sample; their Gamma rows are weakly identified."""
    counts = np.atleast_2d(np.asarray(counts))
    empty = [int(j) for j in np.flatnonzero(counts.sum(axis=0) == 0)]
    if empty:
        names = [taxa[j] for j in empty] if taxa else empty
        logger.warning(
            "Taxa with zero count in every sample; left in place",
            extra={"taxa": names},
        )
    return empty
