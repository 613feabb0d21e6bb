from pathlib import Path
from typing import List, Optional

import typer
from rich.table import Table

from pamir.core.config import Config
from pamir.core.deps import console, get_config_from, resolve_seed
from pamir.core.errors import ErrorCode, ExitCode, PamirError, cli_errors
from pamir.schemas.schemas import BasisSpec, BenchmarkSummary, BinarySimSpec, LibrarySizeLaw, MetricSummary
from pamir.services.benchmark import (
    DEFAULT_CUTOFFS,
    TABLE1_CELLS,
    BenchmarkReport,
    parse_cells,
    run_binary_benchmark,
    run_misspec,
    run_table1,
)
from pamir.services.fitter import build_dataset
from pamir.utils.reports import write_benchmark
from pamir.utils.validate_and_parse_table import validate_and_parse_table

router = typer.Typer(help="Simulation benchmarks.")


def _floats(text: str, name: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise PamirError(ErrorCode.VALIDATION_ERROR, f"--{name} must be a comma-separated list of numbers")
    if not values:
        raise PamirError(ErrorCode.VALIDATION_ERROR, f"--{name} is empty")
    return values


def _reps(config: Config, reps: Optional[int], full_scale: bool) -> int:
    if reps is not None:
        return reps
    return config.BENCH_FULL_REPS if full_scale else config.BENCH_REPS


def _fmt(metric: MetricSummary) -> str:
    if metric.mean is None:
        return "n/a"
    sd = f"{metric.sd:.3f}" if metric.sd_defined else "n/a"
    return f"{metric.mean:.3f} ({sd})"


def _print_grid(summary: BenchmarkSummary) -> None:
    ns = sorted({c.n for c in summary.cells})
    ps = sorted({c.p for c in summary.cells})
    by_cell = {(c.n, c.p): c for c in summary.cells}
    for title, metric in (("Gamma distance", "gamma_distance"), ("PErr", "perr")):
        table = Table(title=f"{title}: mean (sd)")
        table.add_column("n")
        for p in ps:
            table.add_column(f"p = {p}", justify="right")
        for n in ns:
            row = [str(n)]
            for p in ps:
                cell = by_cell.get((n, p))
                row.append(_fmt(getattr(cell, metric)) if cell else "")
            table.add_row(*row)
        console.print(table)


def _print_misspec(summary: BenchmarkSummary) -> None:
    table = Table(title="PErr under a misspecified cubic basis")
    for col in ("c", "median", "mean (sd)", "ok"):
        table.add_column(col, justify="right")
    for cell in summary.cells:
        median = "n/a" if cell.perr.median is None else f"{cell.perr.median:.3f}"
        table.add_row(f"{cell.c:g}", median, _fmt(cell.perr), f"{cell.n_ok}/{cell.n_ok + cell.n_failed}")
    console.print(table)


def _print_cutoffs(summary: BenchmarkSummary) -> None:
    table = Table(title="Mean test error by cutoff")
    for col in ("cutoff", "logistic", "PAMIR", "majority"):
        table.add_column(col, justify="right")
    for row in summary.cutoffs:
        cells = ["n/a" if v is None else f"{v:.3f}" for v in (row.logistic, row.pamir, row.majority)]
        table.add_row(f"{row.cutoff:g}", *cells)
    console.print(table)


def _finish(report: BenchmarkReport, out_dir: Path) -> None:
    paths = write_benchmark(out_dir, report.summary, report.records)
    summary = report.summary
    console.print(
        f"runs: {summary.n_runs}, failed: {summary.n_failed}, success: {summary.success_fraction:.3f}"
    )
    for path in paths:
        console.print(f"wrote {path}")
    if report.degraded:
        console.print("[red]benchmark degraded[/]: fewer than 90% of replications succeeded")
        raise typer.Exit(code=int(ExitCode.BENCHMARK_DEGRADED))


def _configs(config: Config, seed: int):
    return config.fit_config(seed), config.predict_mh(seed)


@router.command("table1")
@cli_errors
def table1_command(
    ctx: typer.Context,
    out_dir: Path = typer.Option(..., "--out-dir"),
    reps: Optional[int] = typer.Option(None, "--reps"),
    full_scale: bool = typer.Option(False, "--full-scale", help="Use the full replication count."),
    cells: Optional[str] = typer.Option(None, "--cells", help="Comma-separated NxP cells, e.g. 100x5,50x20."),
    seed: Optional[int] = typer.Option(None, "--seed"),
    library_size: Optional[int] = typer.Option(None, "--library-size"),
    mh_burnin: Optional[int] = typer.Option(None, "--mh-burnin"),
    mh_keep: Optional[int] = typer.Option(None, "--mh-keep"),
    em_max: Optional[int] = typer.Option(None, "--em-max"),
):
    """Gamma distance and PErr over the (n, p) grid with the cubic basis."""
    config = get_config_from(
        ctx, LIBRARY_SIZE=library_size, ESTEP_BURN_IN=mh_burnin, ESTEP_KEEP=mh_keep, EM_MAX_ITERS=em_max
    )
    seed = resolve_seed(seed)
    fit_cfg, mh_cfg = _configs(config, seed)
    report = run_table1(
        _reps(config, reps, full_scale),
        parse_cells(cells) if cells else TABLE1_CELLS,
        fit_cfg,
        mh_cfg,
        seed,
        n_jobs=config.THREADS,
        backend=config.PARALLEL_BACKEND,
        library_size_law=LibrarySizeLaw(kind="fixed", m=config.LIBRARY_SIZE),
    )
    _print_grid(report.summary)
    _finish(report, out_dir)


@router.command("misspec")
@cli_errors
def misspec_command(
    ctx: typer.Context,
    out_dir: Path = typer.Option(..., "--out-dir"),
    c: str = typer.Option("0,0.5,1", "--c", help="Comma-separated c values."),
    reps: Optional[int] = typer.Option(None, "--reps"),
    full_scale: bool = typer.Option(False, "--full-scale"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    library_size: Optional[int] = typer.Option(None, "--library-size"),
    mh_burnin: Optional[int] = typer.Option(None, "--mh-burnin"),
    mh_keep: Optional[int] = typer.Option(None, "--mh-keep"),
    em_max: Optional[int] = typer.Option(None, "--em-max"),
):
    """PErr when v_y = 10 (y + c|y|) is fitted with the cubic basis."""
    config = get_config_from(
        ctx, LIBRARY_SIZE=library_size, ESTEP_BURN_IN=mh_burnin, ESTEP_KEEP=mh_keep, EM_MAX_ITERS=em_max
    )
    seed = resolve_seed(seed)
    fit_cfg, mh_cfg = _configs(config, seed)
    report = run_misspec(
        _reps(config, reps, full_scale),
        _floats(c, "c"),
        fit_cfg,
        mh_cfg,
        seed,
        n_jobs=config.THREADS,
        backend=config.PARALLEL_BACKEND,
        library_size_law=LibrarySizeLaw(kind="fixed", m=config.LIBRARY_SIZE),
    )
    _print_misspec(report.summary)
    _finish(report, out_dir)


@router.command("binary")
@cli_errors
def binary_command(
    ctx: typer.Context,
    out_dir: Path = typer.Option(..., "--out-dir"),
    counts: Optional[Path] = typer.Option(None, "--counts", help="Labeled TSV; synthetic data when omitted."),
    response: str = typer.Option("class", "--response", help="0/1 label column of --counts."),
    cutoffs: str = typer.Option(",".join(f"{v:g}" for v in DEFAULT_CUTOFFS), "--cutoffs"),
    n: int = typer.Option(60, "--n"),
    p: int = typer.Option(4, "--p"),
    reps: Optional[int] = typer.Option(None, "--reps"),
    full_scale: bool = typer.Option(False, "--full-scale"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    library_size: Optional[int] = typer.Option(None, "--library-size"),
    mh_burnin: Optional[int] = typer.Option(None, "--mh-burnin"),
    mh_keep: Optional[int] = typer.Option(None, "--mh-keep"),
    em_max: Optional[int] = typer.Option(None, "--em-max"),
):
    """Stratified 2/3 - 1/3 splits: PAMIR vs logistic regression vs the majority class."""
    config = get_config_from(
        ctx, LIBRARY_SIZE=library_size, ESTEP_BURN_IN=mh_burnin, ESTEP_KEEP=mh_keep, EM_MAX_ITERS=em_max
    )
    seed = resolve_seed(seed)
    fit_cfg, mh_cfg = _configs(config, seed)
    data = spec = None
    if counts is not None:
        table = validate_and_parse_table(counts, response_col=response)
        data = build_dataset(
            table.responses, table.counts, BasisSpec(kind="identity", degree=1),
            taxa=table.taxa, sample_ids=table.sample_ids,
        )
    else:
        spec = BinarySimSpec(n=n, p=p, library_size_law=LibrarySizeLaw(kind="fixed", m=config.LIBRARY_SIZE), seed=seed)
    report = run_binary_benchmark(
        spec,
        _reps(config, reps, full_scale),
        _floats(cutoffs, "cutoffs"),
        fit_cfg,
        mh_cfg,
        seed,
        data=data,
        n_jobs=config.THREADS,
        backend=config.PARALLEL_BACKEND,
    )
    _print_cutoffs(report.summary)
    _finish(report, out_dir)
