"""Random-walk Metropolis-Hastings over ALR coordinates."""
import logging
from typing import List, Optional, Sequence, Union

import numpy as np
from joblib import Parallel, delayed
from numpy.typing import ArrayLike

from pamir.core.errors import ErrorCode, PamirError
from pamir.models.entities import BasisVector, ChainOutput, CountVector, LatentVector, ModelParams
from pamir.schemas.schemas import MHConfig
from pamir.services.compositional import LOG_2PI, alr
from pamir.utils.seeding import derive_seed_sequence

logger = logging.getLogger(__name__)

TUNE_SHRINK = 0.7
TUNE_GROW = 1.3
PSEUDO_COUNT = 0.5


class LatentLogTarget:
    """Unnormalized log f(w | x): multinomial-logit term plus a Gaussian (mixture) prior.

    ``means`` holds one row per prior component. With one row this is the E-step
    posterior of a single observation; with the training means it is the
    prediction-time posterior whose prior is the empirical mixture over responses.
    """

    def __init__(self, counts: np.ndarray, means: np.ndarray, theta: ModelParams):
        counts = np.asarray(counts)
        if counts.size != theta.p:
            raise PamirError(
                ErrorCode.DIMENSION_MISMATCH,
                f"counts have {counts.size} taxa but the model has p = {theta.p}",
            )
        self.x_head = counts[:-1].astype(float)
        self.m = float(counts.sum())
        self.means = np.atleast_2d(np.asarray(means, dtype=float))
        self.precision = theta.precision
        self.log_norm = -0.5 * (theta.k * LOG_2PI + theta.sigma_logdet)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    def likelihood(self, w: np.ndarray) -> float:
        # sum_j x_j w_j - m log(sum_j exp(w_j) + 1), constants dropped
        return float(self.x_head @ w - self.m * np.logaddexp.reduce(np.append(w, 0.0)))

    def component_log_densities(self, w: np.ndarray) -> np.ndarray:
        diff = w - self.means
        quad = np.einsum("ij,jk,ik->i", diff, self.precision, diff)
        return self.log_norm - 0.5 * quad

    def prior(self, w: np.ndarray) -> float:
        dens = self.component_log_densities(w)
        if dens.size == 1:
            return float(dens[0])
        return float(np.logaddexp.reduce(dens))

    def __call__(self, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=float)
        return self.likelihood(w) + self.prior(w)


def _counts(x: Union[CountVector, ArrayLike]) -> np.ndarray:
    return x.counts if isinstance(x, CountVector) else CountVector(np.asarray(x)).counts


def estep_log_target(x: Union[CountVector, ArrayLike], h: Union[BasisVector, ArrayLike], theta: ModelParams) -> LatentLogTarget:
    h = h.h if isinstance(h, BasisVector) else np.asarray(h, dtype=float)
    return LatentLogTarget(_counts(x), theta.latent_mean(h)[None, :], theta)


def prediction_log_target(
    x_new: Union[CountVector, ArrayLike],
    training_bases: Union[Sequence[BasisVector], ArrayLike],
    theta: ModelParams,
) -> LatentLogTarget:
    if isinstance(training_bases, np.ndarray):
        bases = np.atleast_2d(training_bases)
    else:
        bases = np.atleast_2d(np.array([b.h if isinstance(b, BasisVector) else b for b in training_bases], dtype=float))
    if bases.size == 0:
        raise PamirError(ErrorCode.VALIDATION_ERROR, "prediction needs at least one training basis vector")
    return LatentLogTarget(_counts(x_new), theta.latent_mean(bases), theta)


def init_chain(x: Union[CountVector, ArrayLike]) -> np.ndarray:
    """Start near the posterior mode: ALR of the pseudo-counted proportions."""
    counts = _counts(x).astype(float) + PSEUDO_COUNT
    return alr(counts / counts.sum())


def log_ratio(log_target, w_from: ArrayLike, w_to: ArrayLike) -> float:
    """log target(w_to) - log target(w_from); the proposal is symmetric so no correction term."""
    return float(log_target(np.asarray(w_to, dtype=float)) - log_target(np.asarray(w_from, dtype=float)))


def mh_run(
    log_target,
    init: Union[LatentVector, ArrayLike],
    cfg: MHConfig,
    rng: Optional[np.random.Generator] = None,
) -> ChainOutput:
    w = np.array(init.w if isinstance(init, LatentVector) else init, dtype=float, ndmin=1)
    k = w.size
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)

    current = float(log_target(w))
    if not np.isfinite(current):
        raise PamirError(ErrorCode.SAMPLER_ERROR, f"log target is not finite at the initial state ({current})")

    kept_steps = cfg.n_keep * cfg.thinning
    total = cfg.burn_in + kept_steps
    noise = rng.standard_normal((total, k))
    uniforms = rng.random(total)

    scale = float(cfg.proposal_scale)
    samples = np.empty((cfg.n_keep, k))
    accepted_kept = 0
    batch_accepted = 0
    n_nonfinite = 0

    for t in range(total):
        candidate = w + scale * noise[t]
        proposed = float(log_target(candidate))
        if not np.isfinite(proposed):
            n_nonfinite += 1
            accept = False
        else:
            kappa = np.exp(min(0.0, proposed - current))
            accept = kappa >= uniforms[t]
        if accept:
            w = candidate
            current = proposed

        if t < cfg.burn_in:
            batch_accepted += accept
            if cfg.auto_tune and (t + 1) % cfg.tune_interval == 0:
                rate = batch_accepted / cfg.tune_interval
                if rate < cfg.tune_low:
                    scale *= TUNE_SHRINK
                elif rate > cfg.tune_high:
                    scale *= TUNE_GROW
                batch_accepted = 0
        else:
            accepted_kept += accept
            j = t - cfg.burn_in
            if (j + 1) % cfg.thinning == 0:
                samples[j // cfg.thinning] = w

    if n_nonfinite:
        logger.debug("Rejected non-finite proposals", extra={"count": n_nonfinite})

    return ChainOutput.from_samples(
        samples,
        acceptance_rate=accepted_kept / kept_steps,
        final_state=w.copy(),
        proposal_scale=scale,
        n_nonfinite=n_nonfinite,
    )


def _run_indexed(index: int, target, init, cfg: MHConfig, seed_seq: np.random.SeedSequence) -> ChainOutput:
    try:
        return mh_run(target, init, cfg, rng=np.random.default_rng(seed_seq))
    except PamirError as e:
        raise PamirError(e.code, f"observation {index}: {e.message}", detail={"observation": index}) from e


def run_chains(
    targets: Sequence,
    inits: Sequence[np.ndarray],
    cfg: MHConfig,
    master_seed: int,
    stream: Sequence[int] = (),
    scales: Optional[Sequence[float]] = None,
    n_jobs: int = 1,
    backend: str = "loky",
) -> List[ChainOutput]:
    """One chain per target; chain i draws from the stream (master_seed, *stream, i)."""
    configs = [
        cfg if scales is None else cfg.model_copy(update={"proposal_scale": float(s)})
        for s in (scales if scales is not None else [None] * len(targets))
    ]
    jobs = [
        (i, targets[i], inits[i], configs[i], derive_seed_sequence(master_seed, *stream, i))
        for i in range(len(targets))
    ]
    if n_jobs == 1 or len(jobs) < 2:
        return [_run_indexed(*job) for job in jobs]
    return Parallel(n_jobs=n_jobs, backend=backend)(delayed(_run_indexed)(*job) for job in jobs)
