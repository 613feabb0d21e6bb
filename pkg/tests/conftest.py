import numpy as np
import pytest

from pamir.models.entities import ModelParams
from pamir.schemas.schemas import FitConfig, LibrarySizeLaw, MHConfig, SimSpec
from pamir.services.simulation import generate


def make_theta(p: int = 4, r: int = 3, d: int = 1, seed: int = 0) -> ModelParams:
    """Random valid parameters: PD sigma, constraint enforced by rescaling."""
    rng = np.random.default_rng(seed)
    k = p - 1
    a = rng.standard_normal((k, k))
    sigma = a @ a.T / k + 0.5 * np.eye(k)
    gamma = rng.standard_normal((k, d))
    beta = rng.standard_normal((d, r))
    mu = 0.3 * rng.standard_normal(k)
    return ModelParams.normalized(mu, gamma, beta, sigma)


@pytest.fixture
def theta() -> ModelParams:
    return make_theta()


@pytest.fixture
def quick_mh() -> MHConfig:
    return MHConfig(burn_in=200, n_keep=200, proposal_scale=0.5, auto_tune=True, seed=5)


@pytest.fixture
def quick_fit_cfg() -> FitConfig:
    return FitConfig(
        max_em_iters=6,
        em_tol=1e-3,
        mh=MHConfig(burn_in=100, n_keep=60, proposal_scale=0.5, auto_tune=True),
        seed=3,
    )


@pytest.fixture
def sim_small():
    """(train, test, truth) with n = 30, p = 4 under the default generator."""
    spec = SimSpec(n=30, p=4, n_test=10, library_size_law=LibrarySizeLaw(m=500), seed=11)
    return generate(spec)


@pytest.fixture
def count_table(tmp_path):
    """A small labeled TSV: 8 samples, 3 taxa, numeric response column 'y'."""
    rows = [
        ("s1", 0.10, 12, 30, 8),
        ("s2", -0.40, 25, 10, 15),
        ("s3", 1.20, 3, 40, 7),
        ("s4", 0.00, 18, 22, 10),
        ("s5", -1.10, 35, 5, 10),
        ("s6", 0.75, 6, 33, 11),
        ("s7", 0.30, 14, 26, 10),
        ("s8", -0.80, 30, 9, 11),
    ]
    lines = ["sample\ty\tA\tB\tC"]
    lines += ["\t".join(str(v) for v in row) for row in rows]
    path = tmp_path / "counts.tsv"
    path.write_text("\n".join(lines) + "\n")
    return path
