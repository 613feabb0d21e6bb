import numpy as np
import pytest
from scipy import optimize

from pamir.core.errors import ErrorCode, PamirError
from pamir.services.baseline import (
    PSEUDO_COUNT,
    alr_features,
    logistic_baseline_fit,
    logistic_baseline_predict,
    negative_log_likelihood,
)


def test_alr_features_use_pseudo_counts():
    features = alr_features([[0, 3, 1]])
    assert np.allclose(features, [[np.log(PSEUDO_COUNT / 1.5), np.log(3.5 / 1.5)]])


def test_symmetric_design_has_zero_intercept():
    features = np.array([[-2.0], [-1.0], [-0.5], [0.5], [1.0], [2.0]])
    labels = np.array([0, 0, 1, 0, 1, 1])
    model = logistic_baseline_fit(features, labels)
    assert model.converged and not model.ridge_used
    assert model.weights[0] == pytest.approx(0.0, abs=1e-8)
    assert model.weights[1] > 0


def test_matches_direct_likelihood_minimisation():
    rng = np.random.default_rng(0)
    features = rng.normal(size=(80, 3))
    labels = (features @ [1.0, -0.5, 0.3] + rng.logistic(size=80) > 0).astype(int)
    model = logistic_baseline_fit(features, labels)
    oracle = optimize.minimize(
        negative_log_likelihood, np.zeros(4), args=(features, labels), method="BFGS", options={"gtol": 1e-10}
    )
    assert np.allclose(model.weights, oracle.x, atol=1e-5)
    assert negative_log_likelihood(model.weights, features, labels) <= oracle.fun + 1e-8


def test_probabilities_are_in_the_open_unit_interval():
    rng = np.random.default_rng(1)
    counts = rng.integers(0, 50, size=(30, 4))
    labels = rng.integers(0, 2, size=30)
    labels[:2] = (0, 1)
    labels[2:4] = (0, 1)
    model = logistic_baseline_fit(alr_features(counts), labels)
    prob = logistic_baseline_predict(model, alr_features(counts))
    assert prob.shape == (30,)
    assert np.all((prob > 0) & (prob < 1))


def test_separated_classes_fall_back_to_ridge():
    features = np.array([[-3.0], [-2.0], [-1.0], [1.0], [2.0], [3.0]])
    labels = np.array([0, 0, 0, 1, 1, 1])
    model = logistic_baseline_fit(features, labels)
    assert model.ridge_used
    assert np.all(np.isfinite(model.weights))
    prob = logistic_baseline_predict(model, features)
    assert np.all(prob[3:] > 0.5) and np.all(prob[:3] < 0.5)


def test_rejects_non_binary_labels():
    with pytest.raises(PamirError) as err:
        logistic_baseline_fit(np.zeros((4, 1)), [0, 1, 2, 1])
    assert err.value.code == ErrorCode.NON_BINARY_RESPONSE


def test_needs_two_observations_per_class():
    with pytest.raises(PamirError) as err:
        logistic_baseline_fit(np.arange(5.0).reshape(-1, 1), [0, 0, 0, 0, 1])
    assert err.value.code == ErrorCode.VALIDATION_ERROR
