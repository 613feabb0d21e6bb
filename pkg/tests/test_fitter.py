import numpy as np
import pytest
from scipy import linalg

from pamir.core.errors import ErrorCode, PamirError
from pamir.models.entities import EStepStats
from pamir.schemas.schemas import BasisSpec, FitConfig, MHConfig
from pamir.services.fitter import (
    _rel_change,
    align_signs,
    build_dataset,
    build_m_matrix,
    e_step,
    fit,
    fit_observed,
    m_step,
    m_step_gamma_beta,
    m_step_mu,
    m_step_sigma,
    q_tilde,
    q_tilde_from_samples,
    regression_moments,
)
from tests.conftest import make_theta

CUBIC = BasisSpec(kind="polynomial", degree=3)


def random_dataset(n=20, p=4, spec=CUBIC, seed=0):
    rng = np.random.default_rng(seed)
    ys = rng.normal(size=n)
    counts = rng.integers(0, 40, size=(n, p)) + 1
    return build_dataset(ys, counts, spec)


def random_stats(n, k, b=5, seed=1):
    """Raw chains with B draws each, and their sufficient statistics."""
    rng = np.random.default_rng(seed)
    samples = [rng.normal(size=(b, k)) + rng.normal(size=k) for _ in range(n)]
    means = np.stack([s.mean(axis=0) for s in samples])
    seconds = np.stack([s.T @ s / b for s in samples])
    stats = EStepStats(
        chain_means=means,
        chain_second_moments=seconds,
        grand_mean=means.mean(axis=0),
        acceptance_rates=np.ones(n),
        final_states=means,
        samples=samples,
    )
    return stats, samples


def test_dataset_needs_two_observations():
    with pytest.raises(PamirError) as err:
        build_dataset([0.5], [[3, 4, 5]], CUBIC)
    assert err.value.code == ErrorCode.VALIDATION_ERROR


def test_dataset_bases_are_centered():
    data = random_dataset()
    assert np.allclose(data.bases.sum(axis=0), 0.0, atol=1e-10)
    assert data.taxa == ("taxon_1", "taxon_2", "taxon_3", "taxon_4")


def test_m_step_mu_is_flat_average_of_raw_samples():
    stats, samples = random_stats(n=12, k=3)
    assert np.allclose(m_step_mu(stats), np.concatenate(samples).mean(axis=0), atol=1e-12)
    same = EStepStats.from_points(np.tile([1.0, -2.0, 0.5], (5, 1)))
    assert np.allclose(m_step_mu(same), [1.0, -2.0, 0.5])


def test_m_matrix_matches_dense_oracle():
    data = random_dataset(n=15, p=5)
    stats, _ = random_stats(n=15, k=4, seed=3)
    centered = (stats.chain_means - stats.grand_mean).T
    h = data.bases.T
    expected = centered @ h.T @ np.linalg.inv(h @ h.T) @ h @ centered.T
    m = build_m_matrix(stats, data)
    assert np.allclose(m, expected, atol=1e-10)
    sv = np.linalg.svd(m, compute_uv=False)
    assert np.sum(sv > 1e-9 * sv.max()) <= min(4, data.r)


def test_m_matrix_vanishes_without_between_observation_variation():
    data = random_dataset(n=10, p=4)
    stats = EStepStats.from_points(np.tile([0.2, 0.1, -0.3], (10, 1)))
    assert np.allclose(build_m_matrix(stats, data), 0.0, atol=1e-12)


def test_rank_deficient_basis_is_rejected():
    ys = np.tile([0.0, 1.0], 6)
    counts = np.random.default_rng(0).integers(1, 20, size=(12, 3))
    data = build_dataset(ys, counts, CUBIC)
    stats = EStepStats.from_points(np.random.default_rng(1).normal(size=(12, 2)))
    with pytest.raises(PamirError) as err:
        regression_moments(stats, data)
    assert err.value.code == ErrorCode.RANK_DEFICIENT_BASIS


def test_gamma_beta_on_diagonal_m():
    gamma, beta = m_step_gamma_beta(np.diag([4.0, 1.0, 0.0]), np.eye(3), d=1, coef=np.eye(3))
    assert np.allclose(np.abs(gamma[:, 0]), [1.0, 0.0, 0.0], atol=1e-12)
    assert np.allclose(gamma.T @ gamma, 1.0)


def test_gamma_beta_meets_constraint_on_random_inputs():
    rng = np.random.default_rng(4)
    for d in (1, 2):
        a = rng.normal(size=(5, 5))
        sigma = a @ a.T + 0.3 * np.eye(5)
        c = rng.normal(size=(5, 3))
        gamma, _ = m_step_gamma_beta(c @ c.T, sigma, d=d, coef=c)
        assert np.allclose(gamma.T @ np.linalg.solve(sigma, gamma), np.eye(d), atol=1e-10)


def test_gamma_beta_d_too_large():
    with pytest.raises(PamirError) as err:
        m_step_gamma_beta(np.eye(3), np.eye(3), d=3, coef=np.ones((3, 2)))
    assert err.value.code == ErrorCode.CONSTRAINT_VIOLATION


def _objective(gamma, beta, sigma, stats, data):
    inv_root = linalg.inv(linalg.sqrtm(sigma).real)
    resid = stats.chain_means - stats.grand_mean - data.bases @ (gamma @ beta).T
    z = resid @ inv_root.T
    return float(np.sum(z * z))


def test_gamma_beta_is_locally_optimal():
    data = random_dataset(n=25, p=5, seed=5)
    stats, _ = random_stats(n=25, k=4, seed=6)
    rng = np.random.default_rng(7)
    a = rng.normal(size=(4, 4))
    sigma = a @ a.T + np.eye(4)
    gamma, beta = m_step_gamma_beta(build_m_matrix(stats, data), sigma, stats, data, d=1)
    best = _objective(gamma, beta, sigma, stats, data)
    root = linalg.sqrtm(sigma).real
    v = linalg.solve(root, gamma)
    for _ in range(100):
        v2 = v + 1e-3 * rng.normal(size=v.shape)
        v2 /= np.linalg.norm(v2)
        beta2 = beta + 1e-3 * rng.normal(size=beta.shape)
        assert best <= _objective(root @ v2, beta2, sigma, stats, data) + 1e-12


def test_sigma_matches_raw_samples():
    data = random_dataset(n=8, p=4, seed=8)
    stats, samples = random_stats(n=8, k=3, b=6, seed=9)
    theta = make_theta(p=4, r=3, seed=10)
    mu = m_step_mu(stats)
    sigma = m_step_sigma(stats, mu, theta.gamma, theta.beta, data)
    c = mu + data.bases @ theta.coefficient.T
    expected = sum((s - c[i]).T @ (s - c[i]) for i, s in enumerate(samples)) / (8 * 6)
    assert np.allclose(sigma, expected, atol=1e-8)
    assert np.abs(sigma - sigma.T).max() < 1e-14


def test_sigma_with_zero_residuals_is_jitter():
    data = random_dataset(n=6, p=4, seed=11)
    theta = make_theta(p=4, r=3, seed=12)
    latent = theta.latent_mean(data.bases)
    stats = EStepStats.from_points(latent)
    mu = m_step_mu(stats)
    # centered bases make mu equal to theta.mu, so every residual is zero
    sigma = m_step_sigma(stats, mu, theta.gamma, theta.beta, data, jitter=1e-6)
    assert np.allclose(sigma, 1e-6 * np.eye(3), atol=1e-12)


def test_q_tilde_from_statistics_matches_raw_samples(theta):
    data = random_dataset(n=10, p=4, seed=13)
    cfg = FitConfig(mh=MHConfig(burn_in=20, n_keep=30), seed=14)
    stats = e_step(data, theta, cfg, keep_samples=True)
    assert q_tilde(stats, theta, data) == pytest.approx(q_tilde_from_samples(stats.samples, theta, data), abs=1e-8)


def test_m_step_does_not_decrease_q_on_fixed_samples(theta):
    data = random_dataset(n=15, p=4, seed=18)
    cfg = FitConfig(mh=MHConfig(burn_in=50, n_keep=40), seed=19)
    current = theta
    for _ in range(4):
        stats = e_step(data, current, cfg)
        step = m_step(stats, data, 1, current.sigma)
        assert q_tilde(stats, step.theta, data) >= q_tilde(stats, current, data) - 1e-8
        current = step.theta


def test_e_step_prior_dominated_limit():
    data = random_dataset(n=5, p=3, seed=15)
    theta = make_theta(p=3, r=3, seed=16)
    small = theta.normalized(theta.mu, theta.gamma, theta.beta, 1e-6 * np.eye(2))
    cfg = FitConfig(mh=MHConfig(burn_in=300, n_keep=300, proposal_scale=1e-3, auto_tune=True), seed=17)
    stats = e_step(data, small, cfg, init_states=small.latent_mean(data.bases))
    assert np.allclose(stats.chain_means, small.latent_mean(data.bases), atol=0.05)


def test_align_signs_flips_columns():
    ref = np.array([[1.0], [0.5]])
    gamma, beta = align_signs(-ref, np.array([[2.0, -1.0]]), ref)
    assert np.allclose(gamma, ref)
    assert np.allclose(beta, [[-2.0, 1.0]])


def _reduced_rank_mle(latent, bases, d):
    """Closed-form reduced-rank regression with unrestricted Sigma."""
    n = latent.shape[0]
    centered = latent - latent.mean(axis=0)
    coef_ols = np.linalg.lstsq(bases, centered, rcond=None)[0].T
    resid = centered - bases @ coef_ols.T
    s_res = resid.T @ resid / n
    s_hh = bases.T @ bases / n
    root = linalg.sqrtm(s_res).real
    inv_root = np.linalg.inv(root)
    vals, vecs = np.linalg.eigh(inv_root @ coef_ols @ s_hh @ coef_ols.T @ inv_root)
    v = vecs[:, np.argsort(vals)[::-1][:d]]
    coef = root @ v @ v.T @ inv_root @ coef_ols
    gap = coef_ols - coef
    return latent.mean(axis=0), coef, s_res + gap @ s_hh @ gap.T


@pytest.mark.parametrize("p,seed", [(3, 0), (5, 1), (5, 2)])
def test_observed_latent_pass_matches_reduced_rank_solution(p, seed):
    rng = np.random.default_rng(seed)
    n = 50
    ys = rng.normal(size=n)
    data = build_dataset(ys, rng.integers(1, 30, size=(n, p)), CUBIC)
    truth = make_theta(p=p, r=3, seed=seed + 100)
    latent = truth.latent_mean(data.bases) + rng.multivariate_normal(np.zeros(p - 1), truth.sigma, size=n)
    cfg = FitConfig(inner_max_iters=5000, inner_tol=1e-13, sigma_jitter=0.0, seed=0)
    result = fit_observed(latent, data, cfg)
    mu, coef, sigma = _reduced_rank_mle(latent, data.bases, d=1)
    assert np.allclose(result.theta.mu, mu, atol=1e-8)
    assert np.allclose(result.theta.coefficient, coef, atol=1e-8)
    assert np.allclose(result.theta.sigma, sigma, atol=1e-8)
    assert result.theta.constraint_error() < 1e-8


def test_fit_runs_and_keeps_constraint(sim_small, quick_fit_cfg):
    train, _, _ = sim_small
    result = fit(train, quick_fit_cfg)
    assert 1 <= result.iterations_used <= quick_fit_cfg.max_em_iters
    assert len(result.em_trace) == result.iterations_used
    assert all(rec.constraint_error <= 1e-8 for rec in result.em_trace)
    assert all(rec.q_monotone for rec in result.em_trace)
    assert result.em_trace[0].moving_average is None
    assert 0.0 < result.mean_acceptance <= 1.0
    assert result.theta.gamma.shape == (3, 1)


def test_fit_is_deterministic(sim_small, quick_fit_cfg):
    train, _, _ = sim_small
    a = fit(train, quick_fit_cfg)
    b = fit(train, quick_fit_cfg)
    for name in ("mu", "gamma", "beta", "sigma"):
        assert np.array_equal(getattr(a.theta, name), getattr(b.theta, name))
    assert [r.model_dump() for r in a.em_trace] == [r.model_dump() for r in b.em_trace]


def test_fit_result_does_not_depend_on_workers(sim_small, quick_fit_cfg):
    train, _, _ = sim_small
    cfg = quick_fit_cfg.model_copy(update={"max_em_iters": 3})
    serial = fit(train, cfg)
    threaded = fit(train, cfg.model_copy(update={"n_jobs": 2, "backend": "threading"}))
    assert np.array_equal(serial.theta.gamma, threaded.theta.gamma)
    assert np.array_equal(serial.theta.sigma, threaded.theta.sigma)


def test_fit_rejects_d_above_limit(sim_small, quick_fit_cfg):
    train, _, _ = sim_small
    with pytest.raises(PamirError) as err:
        fit(train, quick_fit_cfg.model_copy(update={"d": 4}))
    assert err.value.code == ErrorCode.CONSTRAINT_VIOLATION


def test_non_convergence_is_reported_not_raised(sim_small, quick_fit_cfg):
    train, _, _ = sim_small
    result = fit(train, quick_fit_cfg.model_copy(update={"max_em_iters": 2, "em_tol": 1e-12}))
    assert result.converged is False
    assert result.iterations_used == 2


def test_parameter_change_is_relative_above_unit_norm_and_absolute_below():
    assert _rel_change(np.array([11.0, 0.0]), np.array([10.0, 0.0])) == pytest.approx(0.1)
    assert _rel_change(np.array([0.002]), np.array([0.001])) == pytest.approx(0.001)
    assert _rel_change(np.zeros(3), np.zeros(3)) == 0.0
