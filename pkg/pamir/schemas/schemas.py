from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

SEED_MAX = 2**64 - 1

# -------- Basis

class BasisTableEntry(BaseModel):
    y: float
    h: List[float]


class BasisSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["polynomial", "identity", "table"] = "polynomial"
    degree: int = Field(3, ge=1)
    table: List[BasisTableEntry] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_table(self):
        if self.kind == "table":
            if not self.table:
                raise ValueError("table basis needs at least one entry")
            widths = {len(e.h) for e in self.table}
            if len(widths) != 1 or 0 in widths:
                raise ValueError("table basis entries must share one nonzero width")
        return self

    @property
    def r(self) -> int:
        if self.kind == "polynomial":
            return self.degree
        if self.kind == "identity":
            return 1
        return len(self.table[0].h)

    @classmethod
    def parse(cls, text: str) -> "BasisSpec":
        """Parse ``poly:K`` or ``identity``."""
        from pamir.core.errors import ErrorCode, PamirError

        raw = text.strip().lower()
        if raw == "identity":
            return cls(kind="identity", degree=1)
        if raw.startswith("poly:"):
            try:
                degree = int(raw.split(":", 1)[1])
            except ValueError:
                raise PamirError(ErrorCode.VALIDATION_ERROR, f"Bad basis degree in '{text}'")
            if degree < 1:
                raise PamirError(ErrorCode.VALIDATION_ERROR, f"Basis degree must be >= 1, got {degree}")
            return cls(kind="polynomial", degree=degree)
        raise PamirError(ErrorCode.VALIDATION_ERROR, f"Unknown basis '{text}' (expected poly:K or identity)")

    def label(self) -> str:
        if self.kind == "polynomial":
            return f"poly:{self.degree}"
        return self.kind

# -------- Sampler / fitter configs

class MHConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    burn_in: int = Field(500, ge=0)
    n_keep: int = Field(200, ge=1)
    proposal_scale: float = Field(1.0, gt=0)
    seed: int = Field(0, ge=0, le=SEED_MAX)
    thinning: int = Field(1, ge=1)
    auto_tune: bool = False
    tune_interval: int = Field(50, ge=1)
    tune_low: float = Field(0.2, gt=0, lt=1)
    tune_high: float = Field(0.4, gt=0, lt=1)


class FitConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    d: int = Field(1, ge=1)
    max_em_iters: int = Field(100, ge=1)
    em_tol: float = Field(1e-3, gt=0)
    em_window: int = Field(3, ge=1)
    inner_max_iters: int = Field(50, ge=1)
    inner_tol: float = Field(1e-8, gt=0)
    mh: MHConfig = Field(default_factory=MHConfig)
    sigma_jitter: float = Field(1e-6, ge=0)
    seed: int = Field(0, ge=0, le=SEED_MAX)
    mc_growth: float = Field(1.5, ge=1)
    mc_growth_cap: float = Field(10.0, ge=1)
    mc_stall_iters: int = Field(5, ge=1)
    n_jobs: int = Field(1, ge=1)
    backend: Literal["loky", "threading", "multiprocessing"] = "loky"

# -------- EM trace

class EMIterationRecord(BaseModel):
    iteration: int
    n_keep: int
    q_tilde_before: float
    q_tilde_after: float
    q_monotone: bool
    max_rel_change: float
    moving_average: Optional[float]
    mean_acceptance: float
    inner_iters: int
    constraint_error: float

# -------- Simulation specs

class VFunction(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["linear", "abs_mix"] = "linear"
    a: float = 10.0
    c: float = 0.0

    def __call__(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.kind == "linear":
            return self.a * y
        return self.a * (y + self.c * np.abs(y))


class LibrarySizeLaw(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["fixed", "uniform"] = "fixed"
    m: int = Field(1000, ge=1)
    m_lo: int = Field(500, ge=1)
    m_hi: int = Field(1500, ge=1)

    @model_validator(mode="after")
    def _check_range(self):
        if self.kind == "uniform" and self.m_lo > self.m_hi:
            raise ValueError("m_lo must not exceed m_hi")
        return self

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "fixed":
            return np.full(size, self.m, dtype=np.int64)
        return rng.integers(self.m_lo, self.m_hi + 1, size=size, dtype=np.int64)


class SimSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int = Field(100, ge=2)
    p: int = Field(5, ge=2)
    d: int = Field(1, ge=1, le=1)
    gamma_true: Optional[List[float]] = None
    v_fn: VFunction = Field(default_factory=VFunction)
    sigma_true: Optional[List[List[float]]] = None
    library_size_law: LibrarySizeLaw = Field(default_factory=LibrarySizeLaw)
    n_test: int = Field(50, ge=2)
    seed: int = Field(0, ge=0, le=SEED_MAX)

    @model_validator(mode="after")
    def _check_shapes(self):
        k = self.p - 1
        if self.gamma_true is not None and len(self.gamma_true) != k:
            raise ValueError(f"gamma_true must have length p-1 = {k}")
        if self.sigma_true is not None:
            sigma = np.asarray(self.sigma_true, dtype=float)
            if sigma.shape != (k, k):
                raise ValueError(f"sigma_true must be {k}x{k}")
            if not np.allclose(sigma, sigma.T):
                raise ValueError("sigma_true must be symmetric")
            if np.linalg.eigvalsh(sigma).min() < -1e-12:
                raise ValueError("sigma_true must be positive semidefinite")
        return self

    def gamma_array(self) -> np.ndarray:
        if self.gamma_true is not None:
            return np.asarray(self.gamma_true, dtype=float).reshape(-1, 1)
        pattern = np.zeros(self.p - 1)
        signs = np.array([1.0, 1.0, -1.0, -1.0])
        head = min(4, self.p - 1)
        pattern[:head] = signs[:head]
        return (pattern / 2.0).reshape(-1, 1)

    def sigma_array(self) -> np.ndarray:
        if self.sigma_true is not None:
            return np.asarray(self.sigma_true, dtype=float)
        return np.eye(self.p - 1)


class BinarySimSpec(BaseModel):
    """Two classes whose reduced-space means differ, plus a quadratic bend whose sense depends on the class."""

    model_config = ConfigDict(frozen=True)

    n: int = Field(60, ge=6)
    p: int = Field(4, ge=3)
    class1_fraction: float = Field(2.0 / 3.0, gt=0, lt=1)
    shift: float = Field(2.5, ge=0)
    curvature: float = Field(1.5, ge=0)
    noise_scale: float = Field(1.0, gt=0)
    library_size_law: LibrarySizeLaw = Field(default_factory=lambda: LibrarySizeLaw(m=1000))
    seed: int = Field(0, ge=0, le=SEED_MAX)

# -------- Model file

class MatrixDocument(BaseModel):
    rows: int
    cols: int
    data: List[float]

    @classmethod
    def from_array(cls, a: np.ndarray) -> "MatrixDocument":
        a = np.atleast_2d(np.asarray(a, dtype=float))
        return cls(rows=a.shape[0], cols=a.shape[1], data=[float(v) for v in a.ravel(order="C")])

    def to_array(self) -> np.ndarray:
        if len(self.data) != self.rows * self.cols:
            raise ValueError(f"matrix data has {len(self.data)} entries, expected {self.rows}x{self.cols}")
        return np.asarray(self.data, dtype=float).reshape(self.rows, self.cols)


class ParamsDocument(BaseModel):
    p: int
    d: int
    r: int
    mu: List[float]
    gamma: MatrixDocument
    beta: MatrixDocument
    sigma: MatrixDocument


class FitMetadata(BaseModel):
    seed: int
    fit_config: FitConfig
    converged: bool
    iterations_used: int
    final_delta: Optional[float]
    mean_acceptance: float
    trace: List[EMIterationRecord] = Field(default_factory=list)


class ModelDocument(BaseModel):
    version: str
    taxa: List[str]
    reference_taxon: str
    params: ParamsDocument
    basis: BasisSpec
    basis_offset: List[float]
    training_responses: List[float]
    metadata: FitMetadata

# -------- Benchmark reports

class ReplicationRecord(BaseModel):
    experiment: str
    cell: str
    n: int
    p: int
    c: Optional[float] = None
    rep: int
    seed: int
    gamma_distance: Optional[float] = None
    perr: Optional[float] = None
    converged: Optional[bool] = None
    iterations: Optional[int] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


class BinaryReplicationRecord(BaseModel):
    rep: int
    seed: int
    cutoff: Optional[float] = None
    pamir_error: Optional[float] = None
    logistic_error: Optional[float] = None
    majority_error: Optional[float] = None
    logistic_ridge: Optional[bool] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


class MetricSummary(BaseModel):
    mean: Optional[float]
    sd: Optional[float]
    median: Optional[float]
    sd_defined: bool


class CellSummary(BaseModel):
    cell: str
    n: int
    p: int
    c: Optional[float] = None
    n_ok: int
    n_failed: int
    gamma_distance: MetricSummary
    perr: MetricSummary


class CutoffSummary(BaseModel):
    cutoff: float
    n_ok: int
    logistic: Optional[float]
    pamir: Optional[float]
    majority: Optional[float]


class BenchmarkSummary(BaseModel):
    experiment: str
    seed: int
    reps: int
    n_runs: int
    n_failed: int
    success_fraction: float
    degraded: bool
    cells: List[CellSummary] = Field(default_factory=list)
    cutoffs: List[CutoffSummary] = Field(default_factory=list)
    errors: List[str] = Field(default_factory=list)
