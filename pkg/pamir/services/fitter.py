"""Monte Carlo EM for the logistic-normal multinomial inverse-regression model.

The E-step runs one MH chain per observation and keeps only the sufficient
statistics (chain mean and second moment); every M-step quantity is a function
of those two arrays.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy import linalg

from pamir.core.errors import ErrorCode, PamirError
from pamir.models.entities import Dataset, EStepStats, FitResult, ModelParams
from pamir.schemas.schemas import BasisSpec, EMIterationRecord, FitConfig, MHConfig
from pamir.services.compositional import centered_basis_matrix, zero_count_taxa
from pamir.services.sampler import estep_log_target, init_chain, run_chains

logger = logging.getLogger(__name__)

GRAM_COND_LIMIT = 1e12
GRAM_RIDGE = 1e-10
EIGENGAP_TOL = 1e-12
MIN_EIGEN = 1e-10
Q_SLACK = 1e-8
INIT_SIGMA_RIDGE = 1e-6
STREAM_ESTEP = 1


def build_dataset(
    responses: ArrayLike,
    counts: ArrayLike,
    basis_spec: BasisSpec,
    taxa: Sequence[str] = (),
    sample_ids: Sequence[str] = (),
) -> Dataset:
    """Center the response basis on these responses and bundle everything the fitter needs."""
    responses = np.asarray(responses, dtype=float).ravel()
    bases, offset = centered_basis_matrix(responses, basis_spec)
    counts = np.atleast_2d(np.asarray(counts))
    zero_count_taxa(counts, tuple(taxa))
    data = Dataset(
        responses=responses,
        counts=counts,
        basis_spec=basis_spec,
        basis_offset=offset,
        bases=bases,
        taxa=tuple(taxa),
        sample_ids=tuple(sample_ids),
    )
    logger.debug(
        "Dataset built",
        extra={"n": data.n, "p": data.p, "r": data.r, "gram_condition": data.gram_condition},
    )
    return data

# -------- E-step

def e_step(
    data: Dataset,
    theta: ModelParams,
    cfg: FitConfig,
    iteration: int = 0,
    init_states: Optional[np.ndarray] = None,
    scales: Optional[Sequence[float]] = None,
    mh: Optional[MHConfig] = None,
    keep_samples: bool = False,
) -> EStepStats:
    targets = [estep_log_target(data.counts[i], data.bases[i], theta) for i in range(data.n)]
    if init_states is None:
        init_states = np.stack([init_chain(data.counts[i]) for i in range(data.n)])
    chains = run_chains(
        targets,
        list(init_states),
        mh or cfg.mh,
        master_seed=cfg.seed,
        stream=(STREAM_ESTEP, iteration),
        scales=scales,
        n_jobs=cfg.n_jobs,
        backend=cfg.backend,
    )
    return EStepStats.from_chains(chains, keep_samples=keep_samples)

# -------- M-step pieces

@dataclass(frozen=True)
class RegressionMoments:
    cross: np.ndarray  # (W_bar - w_bar 1^T) H^T, (p-1) x r
    coef: np.ndarray  # cross (H H^T)^-1
    m: np.ndarray  # cross (H H^T)^-1 cross^T
    ridge: float


def gram_factor(data: Dataset) -> Tuple[Tuple[np.ndarray, bool], float]:
    """Cholesky factor of H H^T, with a small ridge when it is ill-conditioned but of full rank."""
    rank = int(np.linalg.matrix_rank(data.bases))
    if rank < data.r:
        raise PamirError(
            ErrorCode.RANK_DEFICIENT_BASIS,
            f"the response basis has rank {rank} < r = {data.r} over these responses; use a smaller basis dimension",
        )
    gram = data.gram
    ridge = 0.0
    if not np.isfinite(data.gram_condition) or data.gram_condition > GRAM_COND_LIMIT:
        ridge = GRAM_RIDGE * float(np.trace(gram)) / data.r
        gram = gram + ridge * np.eye(data.r)
        logger.warning(
            "H H^T is ill-conditioned; adding ridge",
            extra={"condition": data.gram_condition, "ridge": ridge},
        )
    try:
        factor = linalg.cho_factor(gram, lower=True)
    except linalg.LinAlgError as e:
        raise PamirError(
            ErrorCode.RANK_DEFICIENT_BASIS,
            f"the response basis is rank deficient (r = {data.r}); use a smaller basis dimension",
        ) from e
    return factor, ridge


def regression_moments(stats: EStepStats, data: Dataset) -> RegressionMoments:
    centered = stats.chain_means - stats.grand_mean
    cross = centered.T @ data.bases
    factor, ridge = gram_factor(data)
    coef = linalg.cho_solve(factor, cross.T).T
    m = cross @ coef.T
    return RegressionMoments(cross=cross, coef=coef, m=0.5 * (m + m.T), ridge=ridge)


def build_m_matrix(stats: EStepStats, data: Dataset) -> np.ndarray:
    return regression_moments(stats, data).m


def m_step_mu(stats: EStepStats) -> np.ndarray:
    return stats.grand_mean.copy()


def _sign_normalize(vectors: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of every column is made positive
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _symmetric_roots(sigma: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(0.5 * (sigma + sigma.T))
    if vals.min() <= 0:
        raise PamirError(ErrorCode.NOT_POSITIVE_DEFINITE, "sigma is not positive definite")
    root = (vecs * np.sqrt(vals)) @ vecs.T
    inv_root = (vecs / np.sqrt(vals)) @ vecs.T
    return root, inv_root


def _top_eigenvectors(a: np.ndarray, d: int) -> Tuple[np.ndarray, bool]:
    vals, vecs = np.linalg.eigh(0.5 * (a + a.T))
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = _sign_normalize(vecs[:, order])
    tied = False
    if d < vals.size and vals[d - 1] - vals[d] < EIGENGAP_TOL:
        tied = True
        cluster = np.flatnonzero(np.abs(vals - vals[d - 1]) < EIGENGAP_TOL)
        ranked = sorted(cluster, key=lambda i: tuple(-vecs[:, i]))
        vecs[:, cluster] = vecs[:, ranked]
        logger.warning(
            "Eigengap below tolerance; reduction subspace is ill-determined",
            extra={"lambda_d": float(vals[d - 1]), "lambda_d1": float(vals[d])},
        )
    return vecs[:, :d], tied


def _gamma_beta_update(
    m: np.ndarray, sigma: np.ndarray, coef: np.ndarray, d: int
) -> Tuple[np.ndarray, np.ndarray, bool]:
    root, inv_root = _symmetric_roots(sigma)
    v, tied = _top_eigenvectors(inv_root @ m @ inv_root, d)
    gamma = root @ v
    beta = v.T @ inv_root @ coef
    return gamma, beta, tied


def m_step_gamma_beta(
    M: np.ndarray,
    sigma: np.ndarray,
    stats: Optional[EStepStats] = None,
    data: Optional[Dataset] = None,
    d: int = 1,
    coef: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Gamma = Sigma^1/2 V and beta = V^T Sigma^-1/2 (W_bar - w_bar 1^T) H^T (H H^T)^-1.

    V holds the top-d eigenvectors of Sigma^-1/2 M Sigma^-1/2, so the pair
    satisfies Gamma^T Sigma^-1 Gamma = I_d by construction.
    """
    k = M.shape[0]
    if coef is None:
        if stats is None or data is None:
            raise PamirError(ErrorCode.VALIDATION_ERROR, "m_step_gamma_beta needs stats and data, or coef")
        coef = regression_moments(stats, data).coef
    if d > min(k, coef.shape[1]):
        raise PamirError(ErrorCode.CONSTRAINT_VIOLATION, f"d = {d} exceeds min(p-1, r) = {min(k, coef.shape[1])}")
    gamma, beta, _ = _gamma_beta_update(M, sigma, coef, d)
    return gamma, beta


def m_step_sigma(
    raw_stats: EStepStats,
    mu: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    data: Dataset,
    jitter: float = 0.0,
) -> np.ndarray:
    """(1/n) sum_y [S_y - w_y c_y^T - c_y w_y^T + c_y c_y^T] with c_y = mu + Gamma beta h_y."""
    c = mu + data.bases @ (gamma @ beta).T
    wb = raw_stats.chain_means
    n = wb.shape[0]
    cross = wb.T @ c
    sigma = raw_stats.chain_second_moments.sum(axis=0) - cross - cross.T + c.T @ c
    sigma = sigma / n
    sigma = 0.5 * (sigma + sigma.T)
    if np.linalg.eigvalsh(sigma).min() < MIN_EIGEN:
        sigma = sigma + jitter * np.eye(sigma.shape[0])
        logger.debug("Sigma update jittered", extra={"jitter": jitter})
    if np.linalg.eigvalsh(sigma).min() <= 0:
        raise PamirError(
            ErrorCode.NOT_POSITIVE_DEFINITE,
            "Sigma update is not positive definite; increase sigma_jitter",
        )
    return sigma


def q_tilde(stats: EStepStats, theta: ModelParams, data: Dataset) -> float:
    """Monte Carlo Q from the chain sufficient statistics (constants dropped)."""
    c = theta.latent_mean(data.bases)
    wb = stats.chain_means
    cross = wb.T @ c
    total = stats.chain_second_moments.sum(axis=0) - cross - cross.T + c.T @ c
    n = wb.shape[0]
    return float(-0.5 * n * theta.sigma_logdet - 0.5 * np.sum(theta.precision * total))


def q_tilde_from_samples(samples: Sequence[np.ndarray], theta: ModelParams, data: Dataset) -> float:
    """Same quantity by direct summation over the raw chain samples."""
    c = theta.latent_mean(data.bases)
    quad = 0.0
    for y, draws in enumerate(samples):
        resid = np.atleast_2d(draws) - c[y]
        quad += np.einsum("bi,ij,bj->", resid, theta.precision, resid) / resid.shape[0]
    return float(-0.5 * len(samples) * theta.sigma_logdet - 0.5 * quad)


def _rel_change(new: np.ndarray, old: np.ndarray) -> float:
    # relative for large parameters, absolute below unit scale
    return float(np.linalg.norm(new - old) / max(np.linalg.norm(old), 1.0))


def align_signs(gamma: np.ndarray, beta: np.ndarray, reference: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Flip Gamma columns (and beta rows) to point the same way as ``reference``."""
    flips = np.where(np.einsum("ij,ij->j", gamma, reference) < 0, -1.0, 1.0)
    return gamma * flips, beta * flips[:, None]


def max_rel_change(old: ModelParams, new: ModelParams) -> float:
    return max(
        _rel_change(new.mu, old.mu),
        _rel_change(new.gamma, old.gamma),
        _rel_change(new.beta, old.beta),
        _rel_change(new.sigma, old.sigma),
    )


@dataclass(frozen=True)
class MStepResult:
    theta: ModelParams
    inner_iters: int
    inner_converged: bool
    ridge: float
    eigengap_warnings: int


def m_step(
    stats: EStepStats,
    data: Dataset,
    d: int,
    sigma_init: np.ndarray,
    inner_max_iters: int = 50,
    inner_tol: float = 1e-8,
    jitter: float = 0.0,
    prev_gamma: Optional[np.ndarray] = None,
) -> MStepResult:
    """mu first, then alternate (Gamma, beta) | Sigma and Sigma | (Gamma, beta)."""
    mu = m_step_mu(stats)
    moments = regression_moments(stats, data)
    sigma = np.asarray(sigma_init, dtype=float)
    coefficient = None
    gamma = beta = None
    tied_count = 0
    converged = False
    it = 0
    for it in range(1, inner_max_iters + 1):
        gamma, beta, tied = _gamma_beta_update(moments.m, sigma, moments.coef, d)
        tied_count += int(tied)
        new_sigma = m_step_sigma(stats, mu, gamma, beta, data, jitter)
        new_coefficient = gamma @ beta
        change = _rel_change(new_sigma, sigma)
        if coefficient is not None:
            change = max(change, _rel_change(new_coefficient, coefficient))
        sigma, coefficient = new_sigma, new_coefficient
        if change < inner_tol:
            converged = True
            break
    if prev_gamma is not None:
        gamma, beta = align_signs(gamma, beta, prev_gamma)
    # Gamma beta and Sigma are kept; Gamma is rescaled onto the constraint under the final Sigma
    theta = ModelParams.normalized(mu, gamma, beta, sigma)
    return MStepResult(
        theta=theta,
        inner_iters=it,
        inner_converged=converged,
        ridge=moments.ridge,
        eigengap_warnings=tied_count,
    )

# -------- Driver

def _check_inputs(data: Dataset, cfg: FitConfig) -> None:
    k = data.p - 1
    if cfg.d > min(k, data.r):
        raise PamirError(
            ErrorCode.CONSTRAINT_VIOLATION,
            f"d = {cfg.d} exceeds min(p-1, r) = min({k}, {data.r})",
        )


def initial_theta(data: Dataset, cfg: FitConfig) -> Tuple[ModelParams, np.ndarray]:
    """theta^0 from pseudo-count ALR proportions; also returns those points as chain starts."""
    w0 = np.stack([init_chain(data.counts[i]) for i in range(data.n)])
    stats0 = EStepStats.from_points(w0)
    sigma0 = np.atleast_2d(np.cov(w0, rowvar=False)) + INIT_SIGMA_RIDGE * np.eye(w0.shape[1])
    moments = regression_moments(stats0, data)
    gamma, beta, _ = _gamma_beta_update(moments.m, sigma0, moments.coef, cfg.d)
    return ModelParams(mu=m_step_mu(stats0), gamma=gamma, beta=beta, sigma=sigma0), w0


def fit_observed(latent: ArrayLike, data: Dataset, cfg: FitConfig) -> FitResult:
    """One EM pass when W is observed directly (the likelihood is a point mass)."""
    _check_inputs(data, cfg)
    stats = EStepStats.from_points(latent)
    sigma0 = np.atleast_2d(np.cov(stats.chain_means, rowvar=False)) + INIT_SIGMA_RIDGE * np.eye(stats.chain_means.shape[1])
    result = m_step(stats, data, cfg.d, sigma0, cfg.inner_max_iters, cfg.inner_tol, cfg.sigma_jitter)
    q = q_tilde(stats, result.theta, data)
    record = EMIterationRecord(
        iteration=1,
        n_keep=1,
        q_tilde_before=q,
        q_tilde_after=q,
        q_monotone=True,
        max_rel_change=0.0,
        moving_average=None,
        mean_acceptance=1.0,
        inner_iters=result.inner_iters,
        constraint_error=result.theta.constraint_error(),
    )
    return FitResult(
        theta=result.theta,
        em_trace=[record],
        converged=result.inner_converged,
        iterations_used=1,
        final_stats=stats,
        diagnostics={"inner_converged": result.inner_converged},
    )


def fit(data: Dataset, cfg: FitConfig) -> FitResult:
    _check_inputs(data, cfg)
    logger.info(
        "MCEM fit started",
        extra={"n": data.n, "p": data.p, "r": data.r, "d": cfg.d, "seed": cfg.seed},
    )
    theta, states = initial_theta(data, cfg)
    scales: List[float] = [cfg.mh.proposal_scale] * data.n
    n_keep = cfg.mh.n_keep
    keep_cap = int(math.floor(cfg.mh.n_keep * cfg.mc_growth_cap))

    trace: List[EMIterationRecord] = []
    deltas: List[float] = []
    best_average = math.inf
    stalled = 0
    converged = False
    stats: Optional[EStepStats] = None
    diagnostics = {
        "q_non_monotone": 0,
        "gram_ridge": 0.0,
        "eigengap_warnings": 0,
        "mc_growth_events": 0,
        "zero_count_taxa": [int(j) for j in np.flatnonzero(data.counts.sum(axis=0) == 0)],
    }

    for t in range(1, cfg.max_em_iters + 1):
        mh_cfg = cfg.mh.model_copy(update={"n_keep": n_keep})
        stats = e_step(data, theta, cfg, iteration=t, init_states=states, scales=scales, mh=mh_cfg)
        states = stats.final_states
        scales = list(stats.proposal_scales)

        q_before = q_tilde(stats, theta, data)
        step = m_step(
            stats,
            data,
            cfg.d,
            theta.sigma,
            cfg.inner_max_iters,
            cfg.inner_tol,
            cfg.sigma_jitter,
            prev_gamma=theta.gamma,
        )
        new_theta = step.theta
        q_after = q_tilde(stats, new_theta, data)
        monotone = q_after >= q_before - Q_SLACK
        if not monotone:
            diagnostics["q_non_monotone"] += 1
            logger.warning(
                "Q decreased on a fixed sample set",
                extra={"iteration": t, "q_before": q_before, "q_after": q_after},
            )
        constraint = new_theta.constraint_error()
        if constraint > 1e-8:
            raise PamirError(
                ErrorCode.CONSTRAINT_VIOLATION,
                f"iteration {t}: Gamma^T Sigma^-1 Gamma deviates from I_d by {constraint:.3e}",
            )
        diagnostics["gram_ridge"] = step.ridge
        diagnostics["eigengap_warnings"] += step.eigengap_warnings

        delta = max_rel_change(theta, new_theta)
        deltas.append(delta)
        average = float(np.mean(deltas[-cfg.em_window:])) if len(deltas) >= cfg.em_window else None
        trace.append(
            EMIterationRecord(
                iteration=t,
                n_keep=n_keep,
                q_tilde_before=q_before,
                q_tilde_after=q_after,
                q_monotone=bool(monotone),
                max_rel_change=delta,
                moving_average=average,
                mean_acceptance=float(stats.acceptance_rates.mean()),
                inner_iters=step.inner_iters,
                constraint_error=constraint,
            )
        )
        logger.debug(
            "EM iteration",
            extra={"iteration": t, "delta": delta, "moving_average": average, "n_keep": n_keep},
        )
        theta = new_theta

        if average is None:
            continue
        if average < cfg.em_tol:
            converged = True
            break
        if average < best_average:
            best_average = average
            stalled = 0
        else:
            stalled += 1
        if stalled >= cfg.mc_stall_iters and n_keep < keep_cap:
            n_keep = min(keep_cap, int(math.ceil(n_keep * cfg.mc_growth)))
            stalled = 0
            diagnostics["mc_growth_events"] += 1
            logger.info("Monte Carlo sample size increased", extra={"iteration": t, "n_keep": n_keep})

    diagnostics["final_n_keep"] = n_keep
    if not converged:
        logger.warning("MCEM did not converge", extra={"iterations": len(trace)})
    logger.info(
        "MCEM fit finished",
        extra={"iterations": len(trace), "converged": converged, "final_delta": trace[-1].max_rel_change},
    )
    return FitResult(
        theta=theta,
        em_trace=trace,
        converged=converged,
        iterations_used=len(trace),
        final_stats=stats,
        diagnostics=diagnostics,
    )
