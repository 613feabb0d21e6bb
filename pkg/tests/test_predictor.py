import numpy as np
import pytest
from scipy import linalg

from pamir.core.errors import ErrorCode, PamirError
from pamir.models.entities import CountVector, ReducedVector
from pamir.schemas.schemas import BasisSpec, MHConfig
from pamir.services.compositional import center_basis
from pamir.services.predictor import (
    LOG_TINY,
    assign_classes,
    build_predictor_state,
    classify,
    conditional_mean_given_u,
    conditional_means,
    predict,
    predict_detailed,
    predict_many,
)
from tests.conftest import make_theta

IDENTITY = BasisSpec(kind="identity", degree=1)
CUBIC = BasisSpec(kind="polynomial", degree=3)


def state_for(ys, spec=CUBIC, p=4, d=1, seed=0):
    theta = make_theta(p=p, r=spec.r, d=d, seed=seed)
    return build_predictor_state(theta, ys, spec, center_basis(ys, spec))


@pytest.fixture
def cubic_state():
    ys = np.random.default_rng(0).normal(size=20)
    return state_for(ys)


@pytest.fixture
def binary_state():
    return state_for(np.array([0, 1, 1, 0, 1, 0, 1, 1], dtype=float), spec=IDENTITY, seed=3)


def test_state_uses_the_fitted_offset():
    ys = np.array([0.5, -1.0, 2.0])
    offset = np.array([0.1, 0.2, 0.3])
    state = build_predictor_state(make_theta(), ys, CUBIC, offset)
    assert np.allclose(state.training_bases[0], [0.5 - 0.1, 0.25 - 0.2, 0.125 - 0.3])
    assert np.allclose(state.reduction @ state.theta.gamma, 1.0)


def test_constant_response_predicts_that_constant():
    state = state_for(np.full(6, 2.5))
    assert conditional_mean_given_u([0.3], state) == 2.5
    assert predict([10, 4, 7, 9], state, MHConfig(burn_in=20, n_keep=20, seed=1)) == 2.5


def test_two_point_kernel_by_hand():
    state = state_for(np.array([0.0, 1.0]), spec=IDENTITY)
    m0, m1 = state.u_means[:, 0]
    u = 0.5 * (m0 + m1) + 0.2
    w0 = np.exp(-0.5 * (u - m0) ** 2)
    w1 = np.exp(-0.5 * (u - m1) ** 2)
    assert conditional_mean_given_u(ReducedVector(np.array([u])), state) == pytest.approx(w1 / (w0 + w1), abs=1e-6)


def test_kernel_matches_dense_formula_in_two_dimensions():
    ys = np.random.default_rng(1).normal(size=15)
    state = state_for(ys, p=5, d=2, seed=2)
    us = np.random.default_rng(3).normal(size=(7, 2))
    values, n_fallback = conditional_means(us, state)
    assert n_fallback == 0
    for u, value in zip(us, values):
        w = np.exp(-0.5 * np.sum((state.u_means - u) ** 2, axis=1))
        assert value == pytest.approx(w @ ys / w.sum(), abs=1e-10)


def test_far_away_u_falls_back_to_nearest_mean():
    state = state_for(np.array([0.0, 1.0, 2.0]), spec=IDENTITY)
    top = np.argmax(state.u_means[:, 0])
    far = state.u_means[top, 0] + 1e3
    assert -0.5 * 1e6 < LOG_TINY
    values, n_fallback = conditional_means([[far]], state)
    assert n_fallback == 1
    assert values[0] == state.training_responses[top]


def test_conditional_mean_checks_dimension(cubic_state):
    with pytest.raises(PamirError) as err:
        conditional_mean_given_u([0.1, 0.2], cubic_state)
    assert err.value.code == ErrorCode.DIMENSION_MISMATCH


def test_predictions_stay_within_training_range(cubic_state):
    rng = np.random.default_rng(4)
    cfg = MHConfig(burn_in=50, n_keep=50, seed=6)
    y = cubic_state.training_responses
    for x in rng.integers(0, 50, size=(5, 4)) + 1:
        result = predict_detailed(CountVector(x), cubic_state, cfg)
        assert y.min() <= result.y_hat <= y.max()
        assert result.n_samples == 50


def test_predict_rejects_wrong_taxon_count(cubic_state):
    with pytest.raises(PamirError) as err:
        predict([1, 2, 3], cubic_state, MHConfig(seed=0))
    assert err.value.code == ErrorCode.DIMENSION_MISMATCH


def test_predict_many_does_not_depend_on_workers(cubic_state):
    counts = np.random.default_rng(5).integers(1, 40, size=(4, 4))
    cfg = MHConfig(burn_in=30, n_keep=40, seed=8)
    serial = [r.y_hat for r in predict_many(counts, cubic_state, cfg)]
    threaded = [r.y_hat for r in predict_many(counts, cubic_state, cfg, n_jobs=2, backend="threading")]
    assert serial == threaded
    assert serial == [r.y_hat for r in predict_many(counts, cubic_state, cfg)]


def test_predict_many_names_the_failing_sample(cubic_state):
    counts = np.array([[3, 4, 5, 6], [0, 0, 0, 0]])
    with pytest.raises(PamirError) as err:
        predict_many(counts, cubic_state, MHConfig(burn_in=5, n_keep=5, seed=0))
    assert "sample 1" in err.value.message


def test_classify_returns_a_label(binary_state):
    label = classify([20, 5, 9, 30], binary_state, 0.5, MHConfig(burn_in=30, n_keep=30, seed=2))
    assert label in (0, 1)


def test_classify_needs_binary_training_responses(cubic_state):
    with pytest.raises(PamirError) as err:
        classify([1, 2, 3, 4], cubic_state, 0.5, MHConfig(seed=0))
    assert err.value.code == ErrorCode.NON_BINARY_RESPONSE


@pytest.mark.parametrize("cutoff", [0.0, 1.0, -0.2, 1.5])
def test_classify_rejects_cutoffs_outside_unit_interval(binary_state, cutoff):
    with pytest.raises(PamirError) as err:
        classify([1, 2, 3, 4], binary_state, cutoff, MHConfig(seed=0))
    assert err.value.code == ErrorCode.VALIDATION_ERROR


def test_assign_classes_is_strict():
    labels = assign_classes([0.5, 0.6, 0.2, 0.75], [0.5, 0.7])
    assert labels.tolist() == [[0, 1, 0, 1], [0, 0, 0, 1]]


def test_u_at_one_mean_far_from_the_other():
    theta = make_theta(p=4, r=1, seed=9)
    b = 20.0 / abs(theta.beta[0, 0])
    ys = np.array([0.0, b])
    state = build_predictor_state(theta, ys, IDENTITY, center_basis(ys, IDENTITY))
    assert abs(state.u_means[1, 0] - state.u_means[0, 0]) == pytest.approx(20.0)
    assert conditional_mean_given_u(state.u_means[0], state) == pytest.approx(0.0, abs=1e-6)
    assert conditional_mean_given_u(state.u_means[1], state) == pytest.approx(b, abs=1e-6)


def test_estimate_depends_on_w_only_through_the_reduction(cubic_state):
    null = linalg.null_space(cubic_state.reduction)
    rng = np.random.default_rng(10)
    w = rng.normal(size=3)
    moved = w + null @ rng.normal(size=null.shape[1])
    a, _ = conditional_means(cubic_state.reduction @ w, cubic_state)
    b, _ = conditional_means(cubic_state.reduction @ moved, cubic_state)
    assert a[0] == pytest.approx(b[0], abs=1e-12)


def test_estimate_ignores_training_order():
    ys = np.random.default_rng(11).normal(size=12)
    order = np.random.default_rng(12).permutation(12)
    state = state_for(ys, seed=4)
    shuffled = state_for(ys[order], seed=4)
    us = np.array([[-0.5], [0.0], [1.3]])
    assert np.allclose(conditional_means(us, state)[0], conditional_means(us, shuffled)[0], atol=1e-12)


def test_all_class_one_training_data_always_gives_class_one():
    state = state_for(np.ones(5), spec=IDENTITY, seed=5)
    cfg = MHConfig(burn_in=10, n_keep=10, seed=3)
    assert all(classify(x, state, c, cfg) == 1 for x in ([1, 2, 3, 4], [40, 1, 1, 1]) for c in (0.3, 0.99))
