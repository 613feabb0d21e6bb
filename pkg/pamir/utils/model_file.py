"""Versioned JSON model file.

orjson writes the shortest float representation that round-trips, so
write -> read -> write is byte-identical.
"""
from pathlib import Path
from typing import Union

import numpy as np
import orjson
from pydantic import ValidationError

from pamir.core.errors import ErrorCode, PamirError
from pamir.models.entities import Dataset, FitResult, ModelParams, PredictorState
from pamir.schemas.schemas import FitConfig, FitMetadata, MatrixDocument, ModelDocument, ParamsDocument
from pamir.services.predictor import build_predictor_state

MODEL_VERSION = "1"
SUPPORTED_VERSIONS = {"1"}
JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_APPEND_NEWLINE


def model_document(result: FitResult, data: Dataset, cfg: FitConfig) -> ModelDocument:
    theta = result.theta
    return ModelDocument(
        version=MODEL_VERSION,
        taxa=list(data.taxa),
        reference_taxon=data.taxa[-1],
        params=ParamsDocument(
            p=theta.p,
            d=theta.d,
            r=theta.r,
            mu=[float(v) for v in theta.mu],
            gamma=MatrixDocument.from_array(theta.gamma),
            beta=MatrixDocument.from_array(theta.beta),
            sigma=MatrixDocument.from_array(theta.sigma),
        ),
        basis=data.basis_spec,
        basis_offset=[float(v) for v in data.basis_offset],
        training_responses=[float(v) for v in data.responses],
        metadata=FitMetadata(
            seed=cfg.seed,
            # worker settings are not persisted
            fit_config=cfg.model_copy(update={"n_jobs": 1, "backend": "loky"}),
            converged=result.converged,
            iterations_used=result.iterations_used,
            final_delta=result.final_delta,
            mean_acceptance=result.mean_acceptance,
            trace=result.em_trace,
        ),
    )


def dump_model(doc: ModelDocument) -> bytes:
    return orjson.dumps(doc.model_dump(mode="json"), option=JSON_OPTIONS)


def write_model(path: Union[str, Path], doc: ModelDocument) -> None:
    Path(path).write_bytes(dump_model(doc))


def load_model(raw: bytes) -> ModelDocument:
    try:
        payload = orjson.loads(raw)
    except orjson.JSONDecodeError as e:
        raise PamirError(ErrorCode.MODEL_FILE_ERROR, f"model file is not valid JSON: {e}") from e
    if not isinstance(payload, dict) or "version" not in payload:
        raise PamirError(ErrorCode.MODEL_FILE_ERROR, "model file has no version field")
    if str(payload["version"]) not in SUPPORTED_VERSIONS:
        raise PamirError(
            ErrorCode.MODEL_FILE_ERROR,
            f"unsupported model file version '{payload['version']}' (supported: {sorted(SUPPORTED_VERSIONS)})",
        )
    try:
        return ModelDocument.model_validate(payload)
    except ValidationError as e:
        raise PamirError(ErrorCode.MODEL_FILE_ERROR, f"model file is malformed: {e}") from e


def read_model(path: Union[str, Path]) -> ModelDocument:
    path = Path(path)
    if not path.is_file():
        raise PamirError(ErrorCode.MODEL_FILE_ERROR, f"model file '{path}' not found")
    return load_model(path.read_bytes())


def theta_from_document(doc: ModelDocument) -> ModelParams:
    params = doc.params
    try:
        theta = ModelParams(
            mu=np.asarray(params.mu, dtype=float),
            gamma=params.gamma.to_array(),
            beta=params.beta.to_array(),
            sigma=params.sigma.to_array(),
        )
    except ValueError as e:
        raise PamirError(ErrorCode.MODEL_FILE_ERROR, str(e)) from e
    if (theta.p, theta.d, theta.r) != (params.p, params.d, params.r) or len(doc.taxa) != theta.p:
        raise PamirError(ErrorCode.MODEL_FILE_ERROR, "model file dimensions are inconsistent")
    return theta


def predictor_from_document(doc: ModelDocument) -> PredictorState:
    return build_predictor_state(
        theta_from_document(doc),
        doc.training_responses,
        doc.basis,
        doc.basis_offset,
    )
