from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from pamir.core.errors import ErrorCode, PamirError

FLOAT_FORMAT = "%.17g"


@dataclass(frozen=True, eq=False)
class CountTable:
    sample_ids: Tuple[str, ...]
    taxa: Tuple[str, ...]
    counts: np.ndarray
    responses: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return len(self.sample_ids)

    def aligned_to(self, taxa: Sequence[str]) -> "CountTable":
        """Reorder columns to ``taxa`` by name; any missing or extra name is an error."""
        have = set(self.taxa)
        want = list(taxa)
        missing = [t for t in want if t not in have]
        extra = [t for t in self.taxa if t not in set(want)]
        if missing or extra:
            raise PamirError(
                ErrorCode.TAXON_MISMATCH,
                f"Taxa do not match the model. Missing: {missing or 'none'}; extra: {extra or 'none'}",
                detail={"missing": missing, "extra": extra},
            )
        order = [self.taxa.index(t) for t in want]
        return CountTable(
            sample_ids=self.sample_ids,
            taxa=tuple(want),
            counts=self.counts[:, order],
            responses=self.responses,
        )

    def with_reference(self, reference: str) -> "CountTable":
        if reference not in self.taxa:
            raise PamirError(ErrorCode.TAXON_MISMATCH, f"Reference taxon '{reference}' is not in the table")
        taxa = [t for t in self.taxa if t != reference] + [reference]
        return self.aligned_to(taxa)


def _bad_cell(frame: pd.DataFrame, column: str, mask: np.ndarray, what: str) -> PamirError:
    row = int(np.flatnonzero(mask)[0])
    col = frame.columns.get_loc(column) + 1
    value = frame.iloc[row][column]
    # header is line 1
    return PamirError(
        ErrorCode.PARSE_ERROR,
        f"line {row + 2}, column {col} ('{column}'): {what}, got '{value}'",
        detail={"line": row + 2, "column": col},
    )


def validate_and_parse_table(path: Union[str, Path], response_col: Optional[str] = None) -> CountTable:
    """Read a TSV count table: first row taxon names, first column sample ids, nonnegative integer cells.

    When ``response_col`` is given that column is split off as the numeric response.
    """
    path = Path(path)
    if not path.is_file():
        raise PamirError(ErrorCode.PARSE_ERROR, f"Count table '{path}' not found")
    try:
        frame = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False, na_filter=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise PamirError(ErrorCode.PARSE_ERROR, f"{path}: {e}") from e
    # short rows come back as NaN; they fail the cell checks below
    frame = frame.fillna("")
    if frame.shape[1] < 2:
        raise PamirError(ErrorCode.PARSE_ERROR, f"{path}: expected a sample-id column and at least one taxon column")

    # pandas renames duplicate headers, so check the raw first line
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().rstrip("\r\n").split("\t")
    dupes = sorted({c for c in header if header.count(c) > 1})
    if dupes or any(not c.strip() for c in header[1:]):
        raise PamirError(ErrorCode.PARSE_ERROR, f"{path}: line 1 has empty or duplicate column names {dupes}")

    id_col = frame.columns[0]
    sample_ids = frame[id_col].astype(str).str.strip()
    if (sample_ids == "").any():
        raise _bad_cell(frame, id_col, (sample_ids == "").to_numpy(), "empty sample identifier")
    dup_ids = sample_ids[sample_ids.duplicated()].tolist()
    if dup_ids:
        raise PamirError(ErrorCode.PARSE_ERROR, f"{path}: duplicate sample identifiers {sorted(set(dup_ids))}")

    responses = None
    taxon_cols = list(frame.columns[1:])
    if response_col is not None:
        if response_col not in taxon_cols:
            raise PamirError(ErrorCode.PARSE_ERROR, f"{path}: response column '{response_col}' not found")
        raw = frame[response_col].str.strip()
        parsed = pd.to_numeric(raw, errors="coerce")
        bad = (parsed.isna() | ~np.isfinite(parsed.fillna(0.0))).to_numpy()
        if bad.any():
            raise _bad_cell(frame, response_col, bad, "response is not a finite number")
        responses = parsed.to_numpy(dtype=float)
        taxon_cols.remove(response_col)

    if len(taxon_cols) < 2:
        raise PamirError(ErrorCode.PARSE_ERROR, f"{path}: need at least 2 taxon columns, found {len(taxon_cols)}")

    counts = np.empty((frame.shape[0], len(taxon_cols)), dtype=np.int64)
    for j, col in enumerate(taxon_cols):
        raw = frame[col].str.strip()
        bad = ~raw.str.fullmatch(r"\d+").to_numpy(dtype=bool)
        if bad.any():
            raise _bad_cell(frame, col, bad, "expected a nonnegative integer count")
        counts[:, j] = raw.astype(np.int64).to_numpy()

    return CountTable(
        sample_ids=tuple(sample_ids.tolist()),
        taxa=tuple(str(c) for c in taxon_cols),
        counts=counts,
        responses=responses,
    )


def write_count_table(
    path: Union[str, Path],
    table: CountTable,
    response_col: Optional[str] = None,
) -> None:
    frame = pd.DataFrame(table.counts, columns=list(table.taxa))
    frame.insert(0, "sample_id", list(table.sample_ids))
    if response_col is not None and table.responses is not None:
        frame.insert(1, response_col, table.responses)
    frame.to_csv(path, sep="\t", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
