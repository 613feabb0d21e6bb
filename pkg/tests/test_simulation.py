import numpy as np
import pytest
from scipy import integrate, stats

from pamir.core.errors import ErrorCode, PamirError
from pamir.schemas.schemas import BinarySimSpec, LibrarySizeLaw, SimSpec, VFunction
from pamir.services.simulation import (
    alr_inv_rows,
    binary_directions,
    classification_error,
    draw_counts,
    gamma_distance,
    generate,
    generate_binary,
    perr,
)


def test_generate_is_deterministic():
    spec = SimSpec(n=20, p=5, n_test=8, seed=123)
    a_train, a_test, a_truth = generate(spec)
    b_train, b_test, b_truth = generate(spec)
    assert np.array_equal(a_train.counts, b_train.counts)
    assert np.array_equal(a_test.responses, b_test.responses)
    assert np.array_equal(a_truth.train_latent, b_truth.train_latent)
    other, _, _ = generate(spec.model_copy(update={"seed": 124}))
    assert not np.array_equal(a_train.counts, other.counts)


def test_generate_shapes_and_labels():
    spec = SimSpec(n=12, p=6, n_test=5, library_size_law=LibrarySizeLaw(m=300), seed=1)
    train, test, truth = generate(spec)
    assert train.counts.shape == (12, 6) and test.counts.shape == (5, 6)
    assert np.all(train.counts.sum(axis=1) == 300)
    assert train.taxa[-1] == "taxon_6"
    assert test.sample_ids[0] == "test_1"
    assert np.allclose(truth.gamma[:, 0], [0.5, 0.5, -0.5, -0.5, 0.0])
    assert truth.warnings == []
    assert np.allclose(truth.train_v, 10.0 * train.responses)


def test_no_signal_and_no_noise_gives_uniform_compositions():
    spec = SimSpec(
        n=4, p=3, n_test=2, v_fn=VFunction(a=0.0), sigma_true=[[0.0, 0.0], [0.0, 0.0]], seed=2
    )
    _, _, truth = generate(spec)
    assert np.allclose(truth.train_compositions, 1.0 / 3.0)
    assert truth.warnings


def test_large_library_proportions_approach_compositions():
    spec = SimSpec(n=5, p=4, n_test=2, library_size_law=LibrarySizeLaw(m=1_000_000), seed=3)
    train, _, truth = generate(spec)
    proportions = train.counts / train.counts.sum(axis=1, keepdims=True)
    assert np.abs(proportions - truth.train_compositions).max() < 5e-3


def test_abs_mix_v_function():
    v = VFunction(kind="abs_mix", a=10.0, c=0.5)
    assert np.allclose(v(np.array([-2.0, 1.0])), [10.0 * (-2.0 + 1.0), 10.0 * 1.5])


def test_uniform_library_size_law():
    law = LibrarySizeLaw(kind="uniform", m_lo=10, m_hi=20)
    sizes = law.draw(np.random.default_rng(0), 200)
    assert sizes.min() >= 10 and sizes.max() <= 20


def test_alr_inv_rows_sum_to_one():
    z = alr_inv_rows(np.array([[0.0, 0.0], [1.0, -2.0]]))
    assert np.allclose(z.sum(axis=1), 1.0)
    assert np.allclose(z[0], 1.0 / 3.0)


def test_gamma_distance_examples():
    assert gamma_distance([1.0, 0.0], [-1.0, 0.0]) == 0.0
    assert gamma_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(np.sqrt(2.0))
    rotation = np.array([[0.0, -1.0], [1.0, 0.0]])
    g = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
    assert gamma_distance(g @ rotation, g) == pytest.approx(0.0, abs=1e-12)


def test_gamma_distance_shape_mismatch():
    with pytest.raises(PamirError) as err:
        gamma_distance([1.0, 0.0, 0.0], [1.0, 0.0])
    assert err.value.code == ErrorCode.DIMENSION_MISMATCH


def test_perr_examples():
    assert perr([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert perr([0.0, 0.0], [1.0, 3.0]) == pytest.approx(5.0)
    with pytest.raises(PamirError):
        perr([1.0], [1.0, 2.0])
    with pytest.raises(PamirError):
        perr([], [])


def test_classification_error():
    assert classification_error([0, 1, 1, 0], [0, 1, 0, 0]) == 0.25


def test_binary_directions_are_orthonormal():
    shift, bend = binary_directions(5)
    assert np.linalg.norm(shift) == pytest.approx(1.0)
    assert np.linalg.norm(bend) == pytest.approx(1.0)
    assert shift @ bend == pytest.approx(0.0)


def test_generate_binary_labels_and_basis():
    spec = BinarySimSpec(n=30, p=4, seed=7)
    data, latent = generate_binary(spec)
    assert set(np.unique(data.responses)) == {0.0, 1.0}
    assert int(data.responses.sum()) == 20
    assert data.basis_spec.kind == "identity"
    assert latent.shape == (30, 3)
    again, _ = generate_binary(spec)
    assert np.array_equal(data.counts, again.counts)


def test_generate_binary_class_means_separate_along_the_shift():
    spec = BinarySimSpec(n=600, p=4, shift=3.0, curvature=0.0, noise_scale=0.5, seed=8)
    data, latent = generate_binary(spec)
    shift, _ = binary_directions(4)
    projected = latent @ shift
    labels = data.responses.astype(bool)
    assert projected[labels].mean() - projected[~labels].mean() == pytest.approx(3.0, abs=0.2)


def test_two_taxon_proportions_match_the_latent_integral():
    rng = np.random.default_rng(9)
    mean, sd, m, draws = 0.4, 0.8, 20, 40_000
    latent = rng.normal(mean, sd, size=(draws, 1))
    counts = draw_counts(rng, np.full(draws, m), alr_inv_rows(latent))
    grid = np.linspace(mean - 10 * sd, mean + 10 * sd, 4001)
    density = np.exp(-0.5 * ((grid - mean) / sd) ** 2)
    expected = integrate.trapezoid(density / (1.0 + np.exp(-grid)), grid) / integrate.trapezoid(density, grid)
    assert abs(counts[:, 0].mean() / m - expected) < 0.01


def test_generate_binary_bend_changes_sense_with_the_class():
    spec = BinarySimSpec(n=600, p=4, shift=0.0, curvature=1.5, noise_scale=0.1, seed=10)
    data, latent = generate_binary(spec)
    _, bend = binary_directions(4)
    projected = latent @ bend
    labels = data.responses.astype(bool)
    assert stats.skew(projected[labels]) > 1.0
    assert stats.skew(projected[~labels]) < -1.0
    assert np.median(projected[labels]) < -0.5 < 0.5 < np.median(projected[~labels])
