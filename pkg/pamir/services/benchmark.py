"""Simulation experiment drivers: estimation/prediction grid, misspecified basis sweep, binary classification."""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from sklearn.model_selection import StratifiedShuffleSplit

from pamir.core.errors import ErrorCode, PamirError
from pamir.managers.report_manager import ReportAccumulator
from pamir.models.entities import Dataset
from pamir.schemas.schemas import (
    BasisSpec,
    BenchmarkSummary,
    BinaryReplicationRecord,
    BinarySimSpec,
    CellSummary,
    CutoffSummary,
    FitConfig,
    LibrarySizeLaw,
    MetricSummary,
    MHConfig,
    ReplicationRecord,
    SimSpec,
    VFunction,
)
from pamir.services.baseline import alr_features, logistic_baseline_fit, logistic_baseline_predict
from pamir.services.fitter import build_dataset, fit
from pamir.services.predictor import assign_classes, build_predictor_state, predict_many
from pamir.services.simulation import classification_error, gamma_distance, generate, generate_binary, perr
from pamir.utils.seeding import derive_seed

logger = logging.getLogger(__name__)

TABLE1_CELLS: Tuple[Tuple[int, int], ...] = ((50, 5), (50, 10), (50, 20), (100, 5), (100, 10), (100, 20))
MISSPEC_CELL = (100, 5)
DEFAULT_CUTOFFS: Tuple[float, ...] = (0.3, 0.4, 0.5, 0.6, 0.7)
MIN_CLASS_SIZE = 3
MIN_SUCCESS_FRACTION = 0.9

STREAM_TABLE1 = 10
STREAM_MISSPEC = 11
STREAM_BINARY = 12
# sub-streams inside one replication
SUB_DATA, SUB_FIT, SUB_PREDICT = 0, 1, 2

RECOVERABLE = (PamirError, np.linalg.LinAlgError, ValueError, FloatingPointError)


@dataclass(frozen=True, eq=False)
class BenchmarkReport:
    summary: BenchmarkSummary
    records: List[Union[ReplicationRecord, BinaryReplicationRecord]]

    @property
    def degraded(self) -> bool:
        return self.summary.degraded


def parse_cells(text: str) -> List[Tuple[int, int]]:
    cells = []
    for chunk in text.split(","):
        chunk = chunk.strip().lower()
        if not chunk:
            continue
        try:
            n, p = (int(v) for v in chunk.split("x"))
        except ValueError:
            raise PamirError(ErrorCode.VALIDATION_ERROR, f"Bad cell '{chunk}' (expected NxP, e.g. 100x5)")
        if n < 2 or p < 2:
            raise PamirError(ErrorCode.VALIDATION_ERROR, f"Cell '{chunk}' needs n >= 2 and p >= 2")
        cells.append((n, p))
    if not cells:
        raise PamirError(ErrorCode.VALIDATION_ERROR, "no benchmark cells given")
    return cells


def summarize(values: Sequence[float]) -> MetricSummary:
    values = np.asarray([v for v in values if v is not None], dtype=float)
    if values.size == 0:
        return MetricSummary(mean=None, sd=None, median=None, sd_defined=False)
    sd_defined = values.size >= 2
    return MetricSummary(
        mean=float(values.mean()),
        sd=float(values.std(ddof=1)) if sd_defined else None,
        median=float(np.median(values)),
        sd_defined=sd_defined,
    )


def _check_reps(reps: int) -> None:
    if reps < 1:
        raise PamirError(ErrorCode.VALIDATION_ERROR, f"reps must be >= 1, got {reps}")


def _replication_configs(fit_cfg: FitConfig, mh_cfg: MHConfig, rep_seed: int) -> Tuple[FitConfig, MHConfig]:
    fcfg = fit_cfg.model_copy(update={"seed": derive_seed(rep_seed, SUB_FIT), "n_jobs": 1})
    pcfg = mh_cfg.model_copy(update={"seed": derive_seed(rep_seed, SUB_PREDICT)})
    return fcfg, pcfg

# -------- Continuous-response experiments

def run_replication(
    experiment: str,
    cell: str,
    n: int,
    p: int,
    c: Optional[float],
    rep: int,
    rep_seed: int,
    fit_cfg: FitConfig,
    mh_cfg: MHConfig,
    library_size_law: LibrarySizeLaw,
    n_test: int,
    basis_spec: BasisSpec,
) -> ReplicationRecord:
    """generate -> fit -> Gamma distance, then predict the test set -> PErr."""
    record = dict(experiment=experiment, cell=cell, n=n, p=p, c=c, rep=rep, seed=rep_seed)
    v_fn = VFunction(kind="linear") if not c else VFunction(kind="abs_mix", c=c)
    try:
        spec = SimSpec(
            n=n, p=p, v_fn=v_fn, library_size_law=library_size_law,
            n_test=n_test, seed=derive_seed(rep_seed, SUB_DATA),
        )
        train, test, truth = generate(spec, basis_spec)
        fcfg, pcfg = _replication_configs(fit_cfg, mh_cfg, rep_seed)
        result = fit(train, fcfg)
        state = build_predictor_state(result.theta, train.responses, train.basis_spec, train.basis_offset)
        y_hat = [r.y_hat for r in predict_many(test.counts, state, pcfg)]
        return ReplicationRecord(
            **record,
            gamma_distance=gamma_distance(result.theta.gamma, truth.gamma),
            perr=perr(y_hat, test.responses),
            converged=result.converged,
            iterations=result.iterations_used,
        )
    except RECOVERABLE as e:
        logger.warning("Replication failed", extra={"cell": cell, "rep": rep, "error": str(e)})
        return ReplicationRecord(**record, error=str(e))


def _collect(jobs: list, n_jobs: int, backend: str, accumulator: ReportAccumulator) -> None:
    accumulator.start(len(jobs))
    if n_jobs == 1:
        results = (run_replication(*job) for job in jobs)
    else:
        results = Parallel(n_jobs=n_jobs, backend=backend, return_as="generator_unordered")(
            delayed(run_replication)(*job) for job in jobs
        )
    for rec in results:
        accumulator.add(rec.cell, rec.rep, rec, ok=rec.ok, error=rec.error)
        logger.debug("Replication done", extra=accumulator.progress())
    accumulator.finish()


def _summary(
    experiment: str,
    seed: int,
    reps: int,
    accumulator: ReportAccumulator,
    cells: List[Tuple[str, int, int, Optional[float]]],
) -> BenchmarkReport:
    cell_summaries = []
    for label, n, p, c in cells:
        recs = accumulator.for_cell(label)
        ok = [r for r in recs if r.ok]
        cell_summaries.append(
            CellSummary(
                cell=label, n=n, p=p, c=c,
                n_ok=len(ok), n_failed=len(recs) - len(ok),
                gamma_distance=summarize([r.gamma_distance for r in ok]),
                perr=summarize([r.perr for r in ok]),
            )
        )
    progress = accumulator.progress()
    fraction = accumulator.success_fraction
    summary = BenchmarkSummary(
        experiment=experiment,
        seed=seed,
        reps=reps,
        n_runs=progress["done"],
        n_failed=progress["failed"],
        success_fraction=fraction,
        degraded=fraction < MIN_SUCCESS_FRACTION,
        cells=cell_summaries,
        errors=sorted(progress["errors"]),
    )
    if summary.degraded:
        logger.warning("Benchmark degraded", extra={"success_fraction": fraction})
    return BenchmarkReport(summary=summary, records=accumulator.records())


def run_table1(
    reps: int,
    configs: Sequence[Tuple[int, int]] = TABLE1_CELLS,
    fit_cfg: FitConfig = FitConfig(),
    mh_cfg: MHConfig = MHConfig(burn_in=1000, n_keep=1000),
    seed: int = 0,
    n_jobs: int = 1,
    backend: str = "loky",
    library_size_law: LibrarySizeLaw = LibrarySizeLaw(),
    n_test: int = 50,
    basis_spec: BasisSpec = BasisSpec(kind="polynomial", degree=3),
) -> BenchmarkReport:
    """Every cell shares the replication seed schedule, so cells are compared on common random numbers."""
    _check_reps(reps)
    accumulator: ReportAccumulator[ReplicationRecord] = ReportAccumulator()
    cells = [(f"{n}x{p}", n, p, None) for n, p in configs]
    jobs = [
        ("table1", label, n, p, None, rep, derive_seed(seed, STREAM_TABLE1, rep),
         fit_cfg, mh_cfg, library_size_law, n_test, basis_spec)
        for label, n, p, _ in cells
        for rep in range(reps)
    ]
    logger.info("Running estimation/prediction grid", extra={"cells": len(cells), "reps": reps})
    _collect(jobs, n_jobs, backend, accumulator)
    return _summary("table1", seed, reps, accumulator, cells)


def run_misspec(
    reps: int,
    c_values: Sequence[float],
    fit_cfg: FitConfig = FitConfig(),
    mh_cfg: MHConfig = MHConfig(burn_in=1000, n_keep=1000),
    seed: int = 0,
    n_jobs: int = 1,
    backend: str = "loky",
    library_size_law: LibrarySizeLaw = LibrarySizeLaw(),
    n_test: int = 50,
    cell: Tuple[int, int] = MISSPEC_CELL,
) -> BenchmarkReport:
    """v_y = 10 (y + c|y|), always fitted with the cubic basis."""
    _check_reps(reps)
    if not c_values:
        raise PamirError(ErrorCode.VALIDATION_ERROR, "misspecification sweep needs at least one c value")
    n, p = cell
    cubic = BasisSpec(kind="polynomial", degree=3)
    accumulator: ReportAccumulator[ReplicationRecord] = ReportAccumulator()
    cells = [(f"c={float(c):g}", n, p, float(c)) for c in c_values]
    jobs = [
        ("misspec", label, n, p, c, rep, derive_seed(seed, STREAM_MISSPEC, rep),
         fit_cfg, mh_cfg, library_size_law, n_test, cubic)
        for label, _, _, c in cells
        for rep in range(reps)
    ]
    logger.info("Running misspecified-basis sweep", extra={"c_values": list(c_values), "reps": reps})
    _collect(jobs, n_jobs, backend, accumulator)
    return _summary("misspec", seed, reps, accumulator, cells)

# -------- Binary classification

def check_binary_split(labels: np.ndarray) -> None:
    if not np.all(np.isin(labels, (0.0, 1.0))):
        raise PamirError(ErrorCode.NON_BINARY_RESPONSE, "binary benchmark needs responses in {0, 1}")
    n1 = int(labels.sum())
    smallest = min(n1, labels.size - n1)
    if smallest < MIN_CLASS_SIZE:
        raise PamirError(
            ErrorCode.SPLIT_INFEASIBLE,
            f"smallest class has {smallest} observations; stratified splits need at least {MIN_CLASS_SIZE}",
        )


def run_binary_split(
    rep: int,
    rep_seed: int,
    data: Dataset,
    train_idx: np.ndarray,
    test_idx: np.ndarray,
    cutoffs: Sequence[float],
    fit_cfg: FitConfig,
    mh_cfg: MHConfig,
) -> List[BinaryReplicationRecord]:
    """Fit PAMIR and the logistic baseline on one split; one record per cutoff."""
    y_test = data.responses[test_idx]
    y_train = data.responses[train_idx]
    try:
        train = build_dataset(
            y_train, data.counts[train_idx], BasisSpec(kind="identity", degree=1),
            taxa=data.taxa, sample_ids=[data.sample_ids[i] for i in train_idx],
        )
        fcfg, pcfg = _replication_configs(fit_cfg, mh_cfg, rep_seed)
        result = fit(train, fcfg)
        state = build_predictor_state(result.theta, train.responses, train.basis_spec, train.basis_offset)
        y_hat = np.array([r.y_hat for r in predict_many(data.counts[test_idx], state, pcfg)])
        pamir_labels = assign_classes(y_hat, cutoffs)

        baseline = logistic_baseline_fit(alr_features(train.counts), y_train)
        probs = logistic_baseline_predict(baseline, alr_features(data.counts[test_idx]))
        logistic_labels = assign_classes(probs, cutoffs)

        majority = float(y_train.mean() >= 0.5)
        majority_error = classification_error(np.full(y_test.size, majority), y_test)
    except RECOVERABLE as e:
        logger.warning("Binary split failed", extra={"rep": rep, "error": str(e)})
        return [BinaryReplicationRecord(rep=rep, seed=rep_seed, error=str(e))]
    return [
        BinaryReplicationRecord(
            rep=rep,
            seed=rep_seed,
            cutoff=float(cutoff),
            pamir_error=classification_error(pamir_labels[j], y_test),
            logistic_error=classification_error(logistic_labels[j], y_test),
            majority_error=majority_error,
            logistic_ridge=baseline.ridge_used,
        )
        for j, cutoff in enumerate(cutoffs)
    ]


def run_binary_benchmark(
    spec: Optional[BinarySimSpec],
    reps: int,
    cutoffs: Sequence[float] = DEFAULT_CUTOFFS,
    fit_cfg: FitConfig = FitConfig(),
    mh_cfg: MHConfig = MHConfig(burn_in=1000, n_keep=1000),
    seed: int = 0,
    data: Optional[Dataset] = None,
    n_jobs: int = 1,
    backend: str = "loky",
) -> BenchmarkReport:
    """Stratified 2/3 - 1/3 splits of synthetic (``spec``) or user-supplied (``data``) labeled counts."""
    _check_reps(reps)
    if not cutoffs:
        raise PamirError(ErrorCode.VALIDATION_ERROR, "binary benchmark needs at least one cutoff")
    if data is None:
        if spec is None:
            raise PamirError(ErrorCode.VALIDATION_ERROR, "binary benchmark needs a generator spec or a dataset")
        data, _ = generate_binary(spec)
    check_binary_split(data.responses)
    fit_cfg = fit_cfg.model_copy(update={"d": 1})

    splitter = StratifiedShuffleSplit(
        n_splits=reps, test_size=1.0 / 3.0, random_state=derive_seed(seed, STREAM_BINARY) % 2**32
    )
    labels = data.responses.astype(int)
    splits = list(splitter.split(np.zeros((data.n, 1)), labels))
    jobs = [
        (rep, derive_seed(seed, STREAM_BINARY, rep), data, tr, te, list(cutoffs), fit_cfg, mh_cfg)
        for rep, (tr, te) in enumerate(splits)
    ]
    logger.info("Running binary benchmark", extra={"n": data.n, "reps": reps, "cutoffs": list(cutoffs)})

    accumulator: ReportAccumulator[BinaryReplicationRecord] = ReportAccumulator()
    accumulator.start(len(jobs))
    if n_jobs == 1:
        results = (run_binary_split(*job) for job in jobs)
    else:
        results = Parallel(n_jobs=n_jobs, backend=backend, return_as="generator_unordered")(
            delayed(run_binary_split)(*job) for job in jobs
        )
    for recs in results:
        for j, rec in enumerate(recs):
            accumulator.add("binary", rec.rep, rec, ok=rec.ok, error=rec.error, sub=j)
    accumulator.finish()

    records = accumulator.records()
    summaries = []
    for cutoff in cutoffs:
        rows = [r for r in records if r.ok and r.cutoff == float(cutoff)]
        summaries.append(
            CutoffSummary(
                cutoff=float(cutoff),
                n_ok=len(rows),
                logistic=summarize([r.logistic_error for r in rows]).mean,
                pamir=summarize([r.pamir_error for r in rows]).mean,
                majority=summarize([r.majority_error for r in rows]).mean,
            )
        )
    progress = accumulator.progress()
    fraction = accumulator.success_fraction
    summary = BenchmarkSummary(
        experiment="binary",
        seed=seed,
        reps=reps,
        n_runs=progress["done"],
        n_failed=progress["failed"],
        success_fraction=fraction,
        degraded=fraction < MIN_SUCCESS_FRACTION,
        cutoffs=summaries,
        errors=sorted(progress["errors"]),
    )
    return BenchmarkReport(summary=summary, records=records)
