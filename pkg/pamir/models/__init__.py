from .entities import (
    BasisVector,
    ChainOutput,
    Composition,
    CountVector,
    Dataset,
    EStepStats,
    FitResult,
    GeneratorRecord,
    LatentVector,
    ModelParams,
    PredictionResult,
    PredictorState,
    ReducedVector,
)

__all__ = [
    "BasisVector",
    "ChainOutput",
    "Composition",
    "CountVector",
    "Dataset",
    "EStepStats",
    "FitResult",
    "GeneratorRecord",
    "LatentVector",
    "ModelParams",
    "PredictionResult",
    "PredictorState",
    "ReducedVector",
]
