"""Two-stage prediction: sample W given new counts, reduce to U, average the kernel estimator of E(Y|U)."""
import logging
from typing import List, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from numpy.typing import ArrayLike
from scipy.spatial.distance import cdist
from scipy.special import softmax

from pamir.core.errors import ErrorCode, PamirError
from pamir.models.entities import CountVector, ModelParams, PredictionResult, PredictorState, ReducedVector
from pamir.schemas.schemas import BasisSpec, MHConfig
from pamir.services.compositional import centered_basis_matrix
from pamir.services.sampler import init_chain, mh_run, prediction_log_target
from pamir.utils.seeding import derive_seed_sequence

logger = logging.getLogger(__name__)

STREAM_PREDICT = 2
# below this every unnormalized kernel weight is zero in double precision
LOG_TINY = float(np.log(np.finfo(float).tiny))


def build_predictor_state(
    theta: ModelParams,
    training_responses: ArrayLike,
    basis_spec: BasisSpec,
    basis_offset: ArrayLike,
) -> PredictorState:
    """Training bases are re-centered with the fitted offset, never re-estimated."""
    responses = np.asarray(training_responses, dtype=float).ravel()
    bases, offset = centered_basis_matrix(responses, basis_spec, np.asarray(basis_offset, dtype=float))
    return PredictorState(
        theta=theta,
        training_responses=responses,
        training_bases=bases,
        basis_offset=offset,
        basis_spec=basis_spec,
    )


def conditional_means(us: ArrayLike, state: PredictorState) -> Tuple[np.ndarray, int]:
    """Kernel estimate of E(Y | U = u) for every row of ``us``; also returns the fallback count."""
    us = np.atleast_2d(np.asarray(us, dtype=float))
    if us.shape[1] != state.theta.d:
        raise PamirError(ErrorCode.DIMENSION_MISMATCH, f"u has length {us.shape[1]}, expected d = {state.theta.d}")
    y = state.training_responses
    log_w = -0.5 * cdist(us, state.u_means, metric="sqeuclidean")
    log_w = np.where(np.isnan(log_w), -np.inf, log_w)
    top = log_w.max(axis=1)

    out = np.empty(us.shape[0])
    underflow = ~np.isfinite(top) | (top < LOG_TINY)
    ok = ~underflow
    if ok.any():
        out[ok] = softmax(log_w[ok], axis=1) @ y
    if underflow.any():
        # nearest fitted mean
        out[underflow] = y[np.argmax(log_w[underflow], axis=1)]
    return np.clip(out, y.min(), y.max()), int(underflow.sum())


def conditional_mean_given_u(u: Union[ReducedVector, ArrayLike], state: PredictorState) -> float:
    u = u.u if isinstance(u, ReducedVector) else np.atleast_1d(np.asarray(u, dtype=float))
    values, n_fallback = conditional_means(u[None, :], state)
    if n_fallback:
        logger.warning("Kernel weights underflowed; using the nearest-mean response", extra={"u": u.tolist()})
    return float(values[0])


def _counts(x_new: Union[CountVector, ArrayLike], state: PredictorState) -> np.ndarray:
    counts = x_new.counts if isinstance(x_new, CountVector) else CountVector(np.asarray(x_new)).counts
    if counts.size != state.p:
        raise PamirError(
            ErrorCode.DIMENSION_MISMATCH,
            f"new counts have {counts.size} taxa, the model was fitted on {state.p}",
        )
    return counts


def predict_detailed(
    x_new: Union[CountVector, ArrayLike],
    state: PredictorState,
    cfg: MHConfig,
    rng: np.random.Generator = None,
) -> PredictionResult:
    counts = _counts(x_new, state)
    target = prediction_log_target(counts, state.training_bases, state.theta)
    chain = mh_run(target, init_chain(counts), cfg, rng=rng)
    values, n_fallback = conditional_means(chain.samples @ state.reduction.T, state)
    if n_fallback:
        logger.warning(
            "Kernel weights underflowed for some chain samples; prediction may be an extrapolation",
            extra={"n_fallback": n_fallback, "n_samples": values.size},
        )
    y = state.training_responses
    y_hat = float(np.clip(values.mean(), y.min(), y.max()))
    return PredictionResult(
        y_hat=y_hat,
        acceptance_rate=chain.acceptance_rate,
        n_fallback=n_fallback,
        n_samples=values.size,
    )


def predict(x_new: Union[CountVector, ArrayLike], state: PredictorState, cfg: MHConfig) -> float:
    return predict_detailed(x_new, state, cfg).y_hat


def _predict_indexed(index: int, counts: np.ndarray, state: PredictorState, cfg: MHConfig, seed_seq) -> PredictionResult:
    try:
        return predict_detailed(counts, state, cfg, rng=np.random.default_rng(seed_seq))
    except PamirError as e:
        raise PamirError(e.code, f"sample {index}: {e.message}", detail={"sample": index}) from e


def predict_many(
    counts: ArrayLike,
    state: PredictorState,
    cfg: MHConfig,
    n_jobs: int = 1,
    backend: str = "loky",
) -> List[PredictionResult]:
    """Row i runs on the stream (seed, STREAM_PREDICT, i), so results do not depend on n_jobs."""
    rows = np.atleast_2d(np.asarray(counts))
    jobs = [
        (i, rows[i], state, cfg, derive_seed_sequence(cfg.seed, STREAM_PREDICT, i))
        for i in range(rows.shape[0])
    ]
    if n_jobs == 1 or len(jobs) < 2:
        return [_predict_indexed(*job) for job in jobs]
    return Parallel(n_jobs=n_jobs, backend=backend)(delayed(_predict_indexed)(*job) for job in jobs)


def check_cutoff(cutoff: float) -> None:
    if not 0.0 < cutoff < 1.0:
        raise PamirError(ErrorCode.VALIDATION_ERROR, f"cutoff must lie in (0, 1), got {cutoff}")


def require_binary(state: PredictorState) -> None:
    if not state.is_binary:
        raise PamirError(
            ErrorCode.NON_BINARY_RESPONSE,
            "classification needs training responses in {0, 1}",
        )


def classify(x_new: Union[CountVector, ArrayLike], state: PredictorState, cutoff: float, cfg: MHConfig) -> int:
    require_binary(state)
    check_cutoff(cutoff)
    return int(predict(x_new, state, cfg) > cutoff)


def assign_classes(y_hat: ArrayLike, cutoffs: Sequence[float]) -> np.ndarray:
    """Class labels for every cutoff (rows) and prediction (columns); ties go to class 0."""
    for c in cutoffs:
        check_cutoff(c)
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    return (y_hat[None, :] > np.asarray(cutoffs, dtype=float)[:, None]).astype(int)
