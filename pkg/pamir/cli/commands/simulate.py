from pathlib import Path
from typing import Optional

import typer

from pamir.core.deps import console, get_config_from, resolve_seed
from pamir.core.errors import cli_errors
from pamir.models.entities import Dataset
from pamir.schemas.schemas import BinarySimSpec, LibrarySizeLaw, SimSpec, VFunction
from pamir.services.simulation import generate, generate_binary
from pamir.utils.reports import write_json
from pamir.utils.validate_and_parse_table import CountTable, write_count_table

router = typer.Typer()

RESPONSE_COL = "y"
CLASS_COL = "class"


def _table(data: Dataset) -> CountTable:
    return CountTable(sample_ids=data.sample_ids, taxa=data.taxa, counts=data.counts, responses=data.responses)


@router.command("simulate")
@cli_errors
def simulate_command(
    ctx: typer.Context,
    out_dir: Path = typer.Option(..., "--out-dir"),
    n: int = typer.Option(100, "--n", help="Training sample size."),
    p: int = typer.Option(5, "--p", help="Number of taxa."),
    n_test: int = typer.Option(50, "--n-test"),
    a: float = typer.Option(10.0, "--a", help="v_y = a (y + c|y|)."),
    c: float = typer.Option(0.0, "--c"),
    library_size: Optional[int] = typer.Option(None, "--library-size"),
    binary: bool = typer.Option(False, "--binary", help="Write the two-class generator instead."),
    seed: Optional[int] = typer.Option(None, "--seed"),
):
    """Write synthetic count tables (TSV) and the generating truth (JSON)."""
    config = get_config_from(ctx, LIBRARY_SIZE=library_size)
    seed = resolve_seed(seed)
    law = LibrarySizeLaw(kind="fixed", m=config.LIBRARY_SIZE)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if binary:
        spec = BinarySimSpec(n=n, p=p, library_size_law=law, seed=seed)
        data, _ = generate_binary(spec)
        write_count_table(out / "labeled.tsv", _table(data), response_col=CLASS_COL)
        write_json(out / "truth.json", {"spec": spec.model_dump(mode="json")})
        console.print(f"wrote {data.n} labeled samples to {out}")
        return

    v_fn = VFunction(kind="abs_mix", a=a, c=c) if c else VFunction(kind="linear", a=a)
    spec = SimSpec(n=n, p=p, v_fn=v_fn, library_size_law=law, n_test=n_test, seed=seed)
    train, test, truth = generate(spec)
    write_count_table(out / "train.tsv", _table(train), response_col=RESPONSE_COL)
    write_count_table(out / "test.tsv", _table(test), response_col=RESPONSE_COL)
    write_json(
        out / "truth.json",
        {
            "spec": spec.model_dump(mode="json"),
            "gamma": truth.gamma[:, 0].tolist(),
            "sigma": truth.sigma.tolist(),
            "warnings": truth.warnings,
        },
    )
    console.print(f"wrote {train.n} training and {test.n} test samples to {out}")
