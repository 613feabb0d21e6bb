from .schemas import (
    BasisSpec,
    BasisTableEntry,
    BenchmarkSummary,
    BinaryReplicationRecord,
    BinarySimSpec,
    CellSummary,
    CutoffSummary,
    EMIterationRecord,
    FitConfig,
    FitMetadata,
    LibrarySizeLaw,
    MatrixDocument,
    MetricSummary,
    MHConfig,
    ModelDocument,
    ParamsDocument,
    ReplicationRecord,
    SimSpec,
    VFunction,
)

__all__ = [
    "BasisSpec",
    "BasisTableEntry",
    "BenchmarkSummary",
    "BinaryReplicationRecord",
    "BinarySimSpec",
    "CellSummary",
    "CutoffSummary",
    "EMIterationRecord",
    "FitConfig",
    "FitMetadata",
    "LibrarySizeLaw",
    "MatrixDocument",
    "MetricSummary",
    "MHConfig",
    "ModelDocument",
    "ParamsDocument",
    "ReplicationRecord",
    "SimSpec",
    "VFunction",
]
