from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Literal, Optional

import orjson
from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from pamir.core.errors import ErrorCode, PamirError
from pamir.schemas.schemas import BasisSpec, FitConfig, MHConfig


class Config(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="PAMIR_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    APP_NAME: str = Field("pamir")
    APP_VERSION: str = Field("0.1.0")
    LOG_LEVEL: str = Field("INFO")

    # E-step chains
    ESTEP_BURN_IN: int = Field(500, ge=0)
    ESTEP_KEEP: int = Field(200, ge=1)

    # Prediction-time chains, run once per new observation
    PREDICT_BURN_IN: int = Field(1000, ge=0)
    PREDICT_KEEP: int = Field(1000, ge=1)

    MH_PROPOSAL_SCALE: float = Field(1.0, gt=0)
    MH_AUTO_TUNE: bool = Field(True)
    MH_THINNING: int = Field(1, ge=1)

    # EM loop
    D: int = Field(1, ge=1)
    BASIS: str = Field("poly:3")
    EM_MAX_ITERS: int = Field(100, ge=1)
    EM_TOL: float = Field(1e-3, gt=0)
    EM_WINDOW: int = Field(3, ge=1)
    INNER_MAX_ITERS: int = Field(50, ge=1)
    INNER_TOL: float = Field(1e-8, gt=0)
    SIGMA_JITTER: float = Field(1e-6, ge=0)
    MC_GROWTH: float = Field(1.5, ge=1)
    MC_GROWTH_CAP: float = Field(10.0, ge=1)
    MC_STALL_ITERS: int = Field(5, ge=1)

    # Parallelism
    THREADS: int = Field(1, ge=1)
    PARALLEL_BACKEND: Literal["loky", "threading", "multiprocessing"] = Field("loky")

    # Benchmarks
    BENCH_REPS: int = Field(20, ge=1)
    BENCH_FULL_REPS: int = Field(100, ge=1)
    LIBRARY_SIZE: int = Field(1000, ge=1)

    @property
    def basis_spec(self) -> BasisSpec:
        return BasisSpec.parse(self.BASIS)

    def estep_mh(self, seed: int = 0) -> MHConfig:
        return MHConfig(
            burn_in=self.ESTEP_BURN_IN,
            n_keep=self.ESTEP_KEEP,
            proposal_scale=self.MH_PROPOSAL_SCALE,
            auto_tune=self.MH_AUTO_TUNE,
            thinning=self.MH_THINNING,
            seed=seed,
        )

    def predict_mh(self, seed: int = 0) -> MHConfig:
        return MHConfig(
            burn_in=self.PREDICT_BURN_IN,
            n_keep=self.PREDICT_KEEP,
            proposal_scale=self.MH_PROPOSAL_SCALE,
            auto_tune=self.MH_AUTO_TUNE,
            thinning=self.MH_THINNING,
            seed=seed,
        )

    def fit_config(self, seed: int = 0) -> FitConfig:
        return FitConfig(
            d=self.D,
            max_em_iters=self.EM_MAX_ITERS,
            em_tol=self.EM_TOL,
            em_window=self.EM_WINDOW,
            inner_max_iters=self.INNER_MAX_ITERS,
            inner_tol=self.INNER_TOL,
            sigma_jitter=self.SIGMA_JITTER,
            mc_growth=self.MC_GROWTH,
            mc_growth_cap=self.MC_GROWTH_CAP,
            mc_stall_iters=self.MC_STALL_ITERS,
            mh=self.estep_mh(seed),
            seed=seed,
            n_jobs=self.THREADS,
            backend=self.PARALLEL_BACKEND,
        )

    def with_overrides(self, **overrides: Any) -> "Config":
        """Apply non-None CLI flags on top of this config."""
        updates = {k: v for k, v in overrides.items() if v is not None}
        if not updates:
            return self
        try:
            return Config(**{**self.model_dump(), **updates})
        except ValidationError as e:
            raise PamirError(ErrorCode.VALIDATION_ERROR, f"Invalid option: {e}") from e


def load_config(path: Optional[Path] = None) -> Config:
    """Defaults < environment < JSON config file."""
    if path is None:
        return get_config()
    try:
        payload: Dict[str, Any] = orjson.loads(Path(path).read_bytes())
    except (OSError, orjson.JSONDecodeError) as e:
        raise PamirError(ErrorCode.VALIDATION_ERROR, f"Cannot read config file {path}: {e}") from e
    if not isinstance(payload, dict):
        raise PamirError(ErrorCode.VALIDATION_ERROR, f"Config file {path} must hold a JSON object")
    unknown = sorted(set(payload) - set(Config.model_fields))
    if unknown:
        raise PamirError(ErrorCode.VALIDATION_ERROR, f"Unknown config keys in {path}: {', '.join(unknown)}")
    try:
        return Config(**payload)
    except ValidationError as e:
        raise PamirError(ErrorCode.VALIDATION_ERROR, f"Invalid config file {path}: {e}") from e


@lru_cache
def get_config() -> Config:
    return Config()
