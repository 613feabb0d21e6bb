"""Logistic-regression comparator on ALR-transformed proportions, fitted by IRLS."""
import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy import linalg
from scipy.special import expit, log_expit

from pamir.core.errors import ErrorCode, PamirError

logger = logging.getLogger(__name__)

PSEUDO_COUNT = 0.5
MAX_ITERS = 100
TOL = 1e-8
SEPARATION_RIDGE = 1e-6
# coefficients this large mean the classes are (quasi-)separated
DIVERGENCE_NORM = 1e6


@dataclass(frozen=True, eq=False)
class LogisticBaseline:
    weights: np.ndarray  # intercept first
    ridge: float
    converged: bool
    n_iter: int

    @property
    def ridge_used(self) -> bool:
        return self.ridge > 0


def alr_features(counts: ArrayLike) -> np.ndarray:
    counts = np.atleast_2d(np.asarray(counts, dtype=float)) + PSEUDO_COUNT
    return np.log(counts[:, :-1]) - np.log(counts[:, -1:])


def _design(features: np.ndarray) -> np.ndarray:
    features = np.atleast_2d(np.asarray(features, dtype=float))
    return np.hstack([np.ones((features.shape[0], 1)), features])


def negative_log_likelihood(weights: np.ndarray, features: ArrayLike, labels: ArrayLike) -> float:
    x = _design(features)
    eta = x @ weights
    y = np.asarray(labels, dtype=float)
    return float(-np.sum(y * log_expit(eta) + (1.0 - y) * log_expit(-eta)))


def _irls(x: np.ndarray, y: np.ndarray, ridge: float):
    penalty = ridge * np.eye(x.shape[1])
    penalty[0, 0] = 0.0
    beta = np.zeros(x.shape[1])
    for it in range(1, MAX_ITERS + 1):
        prob = expit(x @ beta)
        w = np.clip(prob * (1.0 - prob), 1e-12, None)
        hessian = x.T @ (w[:, None] * x) + penalty
        gradient = x.T @ (y - prob) - penalty @ beta
        try:
            step = linalg.solve(hessian, gradient, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            return beta, False, it
        beta = beta + step
        if not np.all(np.isfinite(beta)) or np.linalg.norm(beta) > DIVERGENCE_NORM:
            return beta, False, it
        if np.max(np.abs(step)) < TOL * max(1.0, np.max(np.abs(beta))):
            return beta, True, it
    return beta, False, MAX_ITERS


def logistic_baseline_fit(features: ArrayLike, labels: ArrayLike) -> LogisticBaseline:
    """Maximum-likelihood logistic fit; falls back to a small ridge when IRLS diverges."""
    y = np.asarray(labels, dtype=float).ravel()
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise PamirError(ErrorCode.NON_BINARY_RESPONSE, "logistic baseline needs labels in {0, 1}")
    n1 = int(y.sum())
    if min(n1, y.size - n1) < 2:
        raise PamirError(ErrorCode.VALIDATION_ERROR, "logistic baseline needs at least 2 observations per class")
    x = _design(features)
    if x.shape[0] != y.size:
        raise PamirError(ErrorCode.DIMENSION_MISMATCH, f"{x.shape[0]} feature rows but {y.size} labels")

    beta, converged, n_iter = _irls(x, y, 0.0)
    if converged:
        return LogisticBaseline(weights=beta, ridge=0.0, converged=True, n_iter=n_iter)

    logger.warning("IRLS did not converge; refitting with a ridge", extra={"ridge": SEPARATION_RIDGE})
    beta, converged, n_iter = _irls(x, y, SEPARATION_RIDGE)
    if not np.all(np.isfinite(beta)):
        raise PamirError(ErrorCode.BENCHMARK_ERROR, "logistic baseline diverged even with a ridge")
    return LogisticBaseline(weights=beta, ridge=SEPARATION_RIDGE, converged=converged, n_iter=n_iter)


def logistic_baseline_predict(model: LogisticBaseline, features: ArrayLike) -> np.ndarray:
    return expit(_design(features) @ model.weights)
