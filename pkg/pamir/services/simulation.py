"""Synthetic data under the logistic-normal multinomial inverse-regression model, and evaluation metrics."""
import logging
from typing import Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import orthogonal_procrustes
from scipy.special import softmax

from pamir.core.errors import ErrorCode, PamirError
from pamir.models.entities import CONSTRAINT_TOL, Dataset, GeneratorRecord
from pamir.schemas.schemas import BasisSpec, BinarySimSpec, SimSpec
from pamir.services.fitter import build_dataset

logger = logging.getLogger(__name__)

CUBIC = BasisSpec(kind="polynomial", degree=3)


def alr_inv_rows(latent: np.ndarray) -> np.ndarray:
    latent = np.atleast_2d(latent)
    return softmax(np.hstack([latent, np.zeros((latent.shape[0], 1))]), axis=1)


def draw_counts(rng: np.random.Generator, library_sizes: np.ndarray, compositions: np.ndarray) -> np.ndarray:
    return np.stack([rng.multinomial(int(m), z) for m, z in zip(library_sizes, compositions)])


def _constraint_warnings(gamma: np.ndarray, sigma: np.ndarray) -> list:
    warnings = []
    if np.linalg.eigvalsh(sigma).min() <= 0:
        warnings.append("sigma_true is singular; the unit constraint on gamma_true was not checked")
    else:
        g = gamma.T @ np.linalg.solve(sigma, gamma)
        err = float(np.linalg.norm(g - np.eye(g.shape[0])))
        if err > CONSTRAINT_TOL:
            warnings.append(f"gamma_true does not satisfy Gamma^T Sigma^-1 Gamma = I (deviation {err:.3e})")
    for message in warnings:
        logger.warning(message)
    return warnings


def generate(spec: SimSpec, basis_spec: BasisSpec = CUBIC) -> Tuple[Dataset, Dataset, GeneratorRecord]:
    """Draw y ~ N(0, 1), W = Gamma v_y + xi, z = alr_inv(W), x ~ Multinomial(m, z).

    The first ``spec.n`` draws form the training set and the next ``spec.n_test``
    the test set. Each set is centered on its own responses; prediction only
    ever uses the training offset.
    """
    rng = np.random.default_rng(spec.seed)
    gamma = spec.gamma_array()
    sigma = spec.sigma_array()
    k = spec.p - 1
    total = spec.n + spec.n_test

    y = rng.standard_normal(total)
    v = spec.v_fn(y)
    xi = rng.multivariate_normal(np.zeros(k), sigma, size=total, method="eigh")
    latent = np.outer(v, gamma[:, 0]) + xi
    compositions = alr_inv_rows(latent)
    library_sizes = spec.library_size_law.draw(rng, total)
    counts = draw_counts(rng, library_sizes, compositions)

    taxa = tuple(f"taxon_{j + 1}" for j in range(spec.p))
    train = build_dataset(
        y[: spec.n], counts[: spec.n], basis_spec, taxa=taxa,
        sample_ids=tuple(f"train_{i + 1}" for i in range(spec.n)),
    )
    test = build_dataset(
        y[spec.n:], counts[spec.n:], basis_spec, taxa=taxa,
        sample_ids=tuple(f"test_{i + 1}" for i in range(spec.n_test)),
    )
    record = GeneratorRecord(
        gamma=gamma,
        sigma=sigma,
        train_latent=latent[: spec.n],
        test_latent=latent[spec.n:],
        train_compositions=compositions[: spec.n],
        test_compositions=compositions[spec.n:],
        train_v=v[: spec.n],
        test_v=v[spec.n:],
        warnings=_constraint_warnings(gamma, sigma),
    )
    return train, test, record


def binary_directions(p: int) -> Tuple[np.ndarray, np.ndarray]:
    k = p - 1
    shift_dir = np.zeros(k)
    shift_dir[:2] = (1.0, -1.0)
    bend_dir = np.zeros(k)
    bend_dir[:2] = (1.0, 1.0)
    return shift_dir / np.sqrt(2.0), bend_dir / np.sqrt(2.0)


def generate_binary(spec: BinarySimSpec) -> Tuple[Dataset, np.ndarray]:
    """Labeled counts: class 1 is shifted along one direction, and the classes bend in opposite senses along another.

    Returns the dataset (identity basis) and the latent matrix.
    """
    rng = np.random.default_rng(spec.seed)
    k = spec.p - 1
    n1 = int(round(spec.n * spec.class1_fraction))
    labels = np.zeros(spec.n)
    labels[:n1] = 1.0
    labels = rng.permutation(labels)

    shift_dir, bend_dir = binary_directions(spec.p)
    s = rng.standard_normal(spec.n)
    xi = spec.noise_scale * rng.standard_normal((spec.n, k))
    latent = (
        np.outer(spec.shift * (labels - labels.mean()), shift_dir)
        + np.outer(spec.curvature * (2.0 * labels - 1.0) * (s**2 - 1.0), bend_dir)
        + xi
    )
    compositions = alr_inv_rows(latent)
    counts = draw_counts(rng, spec.library_size_law.draw(rng, spec.n), compositions)
    data = build_dataset(
        labels, counts, BasisSpec(kind="identity", degree=1),
        taxa=tuple(f"taxon_{j + 1}" for j in range(spec.p)),
        sample_ids=tuple(f"sample_{i + 1}" for i in range(spec.n)),
    )
    return data, latent

# -------- Metrics

def _as_columns(a: ArrayLike) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a.reshape(-1, 1) if a.ndim == 1 else a


def gamma_distance(gamma_hat: ArrayLike, gamma_true: ArrayLike) -> float:
    """Distance between reduction matrices up to column sign (d = 1) or right rotation (d > 1)."""
    gamma_hat = _as_columns(gamma_hat)
    gamma_true = _as_columns(gamma_true)
    if gamma_hat.shape != gamma_true.shape:
        raise PamirError(
            ErrorCode.DIMENSION_MISMATCH,
            f"gamma shapes differ: {gamma_hat.shape} vs {gamma_true.shape}",
        )
    if gamma_hat.shape[1] == 1:
        return float(min(np.linalg.norm(gamma_hat - gamma_true), np.linalg.norm(gamma_hat + gamma_true)))
    rotation, _ = orthogonal_procrustes(gamma_hat, gamma_true)
    return float(np.linalg.norm(gamma_hat @ rotation - gamma_true))


def perr(predictions: ArrayLike, truths: ArrayLike) -> float:
    predictions = np.asarray(predictions, dtype=float).ravel()
    truths = np.asarray(truths, dtype=float).ravel()
    if predictions.size != truths.size:
        raise PamirError(
            ErrorCode.DIMENSION_MISMATCH,
            f"{predictions.size} predictions but {truths.size} truths",
        )
    if predictions.size == 0:
        raise PamirError(ErrorCode.VALIDATION_ERROR, "perr needs at least one prediction")
    return float(np.mean((predictions - truths) ** 2))


def classification_error(labels_hat: ArrayLike, labels: ArrayLike) -> float:
    labels_hat = np.asarray(labels_hat).ravel()
    labels = np.asarray(labels).ravel()
    if labels_hat.size != labels.size or labels.size == 0:
        raise PamirError(ErrorCode.DIMENSION_MISMATCH, "label vectors must have the same nonzero length")
    return float(np.mean(labels_hat != labels))
