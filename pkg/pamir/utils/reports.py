from pathlib import Path
from typing import Iterable, List, Sequence, Union

import orjson
import pandas as pd
from pydantic import BaseModel

from pamir.schemas.schemas import BenchmarkSummary
from pamir.utils.validate_and_parse_table import FLOAT_FORMAT

JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_APPEND_NEWLINE
PathLike = Union[str, Path]


def records_frame(records: Iterable[BaseModel]) -> pd.DataFrame:
    return pd.DataFrame([r.model_dump() for r in records])


def write_csv(path: PathLike, frame: pd.DataFrame, sep: str = ",") -> None:
    frame.to_csv(path, sep=sep, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_json(path: PathLike, payload: Union[BaseModel, dict, list]) -> None:
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    Path(path).write_bytes(orjson.dumps(payload, option=JSON_OPTIONS))


def write_records(path: PathLike, records: Sequence[BaseModel]) -> None:
    write_csv(path, records_frame(records))


def cell_means_frame(summary: BenchmarkSummary) -> pd.DataFrame:
    rows = []
    for cell in summary.cells:
        rows.append(
            {
                "cell": cell.cell,
                "n": cell.n,
                "p": cell.p,
                "c": cell.c,
                "n_ok": cell.n_ok,
                "n_failed": cell.n_failed,
                "distance_mean": cell.gamma_distance.mean,
                "distance_sd": cell.gamma_distance.sd,
                "perr_mean": cell.perr.mean,
                "perr_sd": cell.perr.sd,
                "perr_median": cell.perr.median,
            }
        )
    return pd.DataFrame(rows)


def perr_distribution_frame(records: Sequence[BaseModel]) -> pd.DataFrame:
    """c vs PErr, one row per successful replication."""
    rows = [{"c": r.c, "rep": r.rep, "perr": r.perr} for r in records if r.ok]
    return pd.DataFrame(rows, columns=["c", "rep", "perr"])


def cutoff_frame(summary: BenchmarkSummary) -> pd.DataFrame:
    rows = [
        {"cutoff": c.cutoff, "logistic": c.logistic, "pamir": c.pamir, "majority": c.majority, "n_ok": c.n_ok}
        for c in summary.cutoffs
    ]
    return pd.DataFrame(rows, columns=["cutoff", "logistic", "pamir", "majority", "n_ok"])


def write_benchmark(out_dir: PathLike, summary: BenchmarkSummary, records: Sequence[BaseModel]) -> List[Path]:
    """Writes replications.csv, summary.json and the experiment's plot-ready CSV; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "replications.csv", out / "summary.json"]
    write_records(paths[0], records)
    write_json(paths[1], summary)
    if summary.experiment == "misspec":
        paths.append(out / "perr_by_c.csv")
        write_csv(paths[-1], perr_distribution_frame(records))
    elif summary.experiment == "binary":
        paths.append(out / "cutoffs.csv")
        write_csv(paths[-1], cutoff_frame(summary))
    else:
        paths.append(out / "cells.csv")
        write_csv(paths[-1], cell_means_frame(summary))
    return paths
