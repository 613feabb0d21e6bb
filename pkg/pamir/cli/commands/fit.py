import logging
from pathlib import Path
from typing import Optional

import typer

from pamir.core.deps import console, get_config_from, resolve_seed
from pamir.core.errors import ExitCode, cli_errors
from pamir.services.fitter import build_dataset, fit
from pamir.utils.model_file import model_document, write_model
from pamir.utils.validate_and_parse_table import validate_and_parse_table

router = typer.Typer()
logger = logging.getLogger(__name__)


@router.command("fit")
@cli_errors
def fit_command(
    ctx: typer.Context,
    counts: Path = typer.Option(..., "--counts", help="TSV count table (samples x taxa)."),
    response: str = typer.Option(..., "--response", help="Name of the numeric response column."),
    out: Path = typer.Option(..., "--out", help="Model file to write."),
    d: Optional[int] = typer.Option(None, "--d", help="Reduction dimension."),
    basis: Optional[str] = typer.Option(None, "--basis", help="poly:K or identity."),
    seed: Optional[int] = typer.Option(None, "--seed"),
    mh_burnin: Optional[int] = typer.Option(None, "--mh-burnin"),
    mh_keep: Optional[int] = typer.Option(None, "--mh-keep"),
    em_max: Optional[int] = typer.Option(None, "--em-max"),
    em_tol: Optional[float] = typer.Option(None, "--em-tol"),
    reference: Optional[str] = typer.Option(None, "--reference", help="Taxon used as the ALR reference."),
):
    """Fit the model by Monte Carlo EM and write a model file."""
    config = get_config_from(
        ctx, D=d, BASIS=basis, ESTEP_BURN_IN=mh_burnin, ESTEP_KEEP=mh_keep, EM_MAX_ITERS=em_max, EM_TOL=em_tol
    )
    seed = resolve_seed(seed)
    table = validate_and_parse_table(counts, response_col=response)
    if reference:
        table = table.with_reference(reference)
    data = build_dataset(
        table.responses, table.counts, config.basis_spec, taxa=table.taxa, sample_ids=table.sample_ids
    )
    cfg = config.fit_config(seed)
    result = fit(data, cfg)
    write_model(out, model_document(result, data, cfg))

    delta = "n/a" if result.final_delta is None else f"{result.final_delta:.3f}"
    console.print(f"iterations: {result.iterations_used}")
    console.print(f"final parameter delta: {delta}")
    console.print(f"mean acceptance rate: {result.mean_acceptance:.3f}")
    console.print(f"converged: {'yes' if result.converged else 'no'}")
    console.print(f"model written to {out}")
    if not result.converged:
        console.print("[yellow]warning[/] EM did not converge; the model was written and flagged")
        raise typer.Exit(code=int(ExitCode.NOT_CONVERGED))
