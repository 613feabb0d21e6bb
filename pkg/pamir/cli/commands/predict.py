from pathlib import Path
from typing import Optional

import pandas as pd
import typer

from pamir.core.deps import console, get_config_from, resolve_seed
from pamir.core.errors import cli_errors
from pamir.services.predictor import assign_classes, check_cutoff, predict_many, require_binary
from pamir.utils.model_file import predictor_from_document, read_model
from pamir.utils.reports import write_csv
from pamir.utils.validate_and_parse_table import validate_and_parse_table

router = typer.Typer()


@router.command("predict")
@cli_errors
def predict_command(
    ctx: typer.Context,
    model: Path = typer.Option(..., "--model", help="Model file written by 'fit'."),
    counts: Path = typer.Option(..., "--counts", help="TSV count table to predict."),
    out: Path = typer.Option(..., "--out", help="TSV of predictions."),
    cutoff: Optional[float] = typer.Option(None, "--cutoff", help="Also emit class = 1[y_hat > cutoff]."),
    response: Optional[str] = typer.Option(None, "--response", help="Column to ignore, e.g. the response of a training table."),
    seed: Optional[int] = typer.Option(None, "--seed"),
    mh_burnin: Optional[int] = typer.Option(None, "--mh-burnin"),
    mh_keep: Optional[int] = typer.Option(None, "--mh-keep"),
):
    """Predict responses for new samples; taxa are matched to the model by name."""
    config = get_config_from(ctx, PREDICT_BURN_IN=mh_burnin, PREDICT_KEEP=mh_keep)
    seed = resolve_seed(seed)
    doc = read_model(model)
    state = predictor_from_document(doc)
    if cutoff is not None:
        require_binary(state)
        check_cutoff(cutoff)
    table = validate_and_parse_table(counts, response_col=response).aligned_to(doc.taxa)

    results = predict_many(
        table.counts, state, config.predict_mh(seed), n_jobs=config.THREADS, backend=config.PARALLEL_BACKEND
    )
    frame = pd.DataFrame({"sample_id": list(table.sample_ids), "y_hat": [r.y_hat for r in results]})
    if cutoff is not None:
        frame["class"] = assign_classes(frame["y_hat"].to_numpy(), [cutoff])[0]
    write_csv(out, frame, sep="\t")

    n_fallback = sum(r.n_fallback for r in results)
    console.print(f"predicted {len(results)} samples -> {out}")
    if n_fallback:
        console.print(f"[yellow]warning[/] {n_fallback} chain samples used the nearest-mean fallback")
