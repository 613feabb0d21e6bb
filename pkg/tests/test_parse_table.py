import numpy as np
import pytest

from pamir.core.errors import ErrorCode, PamirError
from pamir.utils.validate_and_parse_table import CountTable, validate_and_parse_table, write_count_table


def write(tmp_path, text, name="table.tsv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_parses_counts_and_response(count_table):
    table = validate_and_parse_table(count_table, response_col="y")
    assert table.taxa == ("A", "B", "C")
    assert table.sample_ids[:2] == ("s1", "s2")
    assert table.counts.shape == (8, 3)
    assert table.counts[0].tolist() == [12, 30, 8]
    assert table.responses[2] == pytest.approx(1.2)


def test_undeclared_response_column_is_read_as_counts(count_table):
    with pytest.raises(PamirError) as err:
        validate_and_parse_table(count_table)
    assert "column 2 ('y')" in err.value.message


def test_bad_count_reports_line_and_column(tmp_path):
    path = write(tmp_path, "id\tA\tB\ns1\t3\t4\ns2\t5\t-1\n")
    with pytest.raises(PamirError) as err:
        validate_and_parse_table(path)
    assert err.value.code == ErrorCode.PARSE_ERROR
    assert "line 3, column 3" in err.value.message


def test_fractional_count_is_rejected(tmp_path):
    path = write(tmp_path, "id\tA\tB\ns1\t3.5\t4\n")
    with pytest.raises(PamirError) as err:
        validate_and_parse_table(path)
    assert "line 2, column 2" in err.value.message


def test_short_row_is_rejected(tmp_path):
    path = write(tmp_path, "id\tA\tB\ns1\t3\t4\ns2\t5\n")
    with pytest.raises(PamirError) as err:
        validate_and_parse_table(path)
    assert "line 3" in err.value.message


def test_non_numeric_response(tmp_path):
    path = write(tmp_path, "id\ty\tA\tB\ns1\t0.3\t3\t4\ns2\tabc\t5\t6\n")
    with pytest.raises(PamirError) as err:
        validate_and_parse_table(path, response_col="y")
    assert "line 3, column 2" in err.value.message


def test_missing_response_column(count_table):
    with pytest.raises(PamirError) as err:
        validate_and_parse_table(count_table, response_col="age")
    assert err.value.code == ErrorCode.PARSE_ERROR


@pytest.mark.parametrize(
    "text",
    [
        "id\tA\tA\ns1\t1\t2\n",
        "id\tA\t\ns1\t1\t2\n",
        "id\tA\tB\ns1\t1\t2\ns1\t3\t4\n",
        "id\tA\ns1\t1\n",
    ],
)
def test_structural_problems(tmp_path, text):
    with pytest.raises(PamirError) as err:
        validate_and_parse_table(write(tmp_path, text))
    assert err.value.code == ErrorCode.PARSE_ERROR


def test_missing_file(tmp_path):
    with pytest.raises(PamirError):
        validate_and_parse_table(tmp_path / "nope.tsv")


def test_aligned_to_reorders_by_name():
    table = CountTable(sample_ids=("a", "b"), taxa=("B", "A", "C"), counts=np.array([[1, 2, 3], [4, 5, 6]]))
    aligned = table.aligned_to(["A", "B", "C"])
    assert aligned.counts.tolist() == [[2, 1, 3], [5, 4, 6]]


def test_aligned_to_lists_missing_and_extra():
    table = CountTable(sample_ids=("a",), taxa=("A", "B", "X"), counts=np.array([[1, 2, 3]]))
    with pytest.raises(PamirError) as err:
        table.aligned_to(["A", "B", "C"])
    assert err.value.code == ErrorCode.TAXON_MISMATCH
    assert err.value.detail == {"missing": ["C"], "extra": ["X"]}


def test_with_reference_moves_taxon_last():
    table = CountTable(sample_ids=("a",), taxa=("A", "B", "C"), counts=np.array([[1, 2, 3]]))
    moved = table.with_reference("A")
    assert moved.taxa == ("B", "C", "A")
    assert moved.counts.tolist() == [[2, 3, 1]]
    with pytest.raises(PamirError):
        table.with_reference("Z")


def test_written_table_reads_back(tmp_path):
    table = CountTable(
        sample_ids=("s1", "s2"), taxa=("A", "B"), counts=np.array([[1, 2], [3, 4]]), responses=np.array([0.1, -2.5])
    )
    path = tmp_path / "out.tsv"
    write_count_table(path, table, response_col="y")
    back = validate_and_parse_table(path, response_col="y")
    assert back.taxa == ("A", "B")
    assert back.counts.tolist() == [[1, 2], [3, 4]]
    assert back.responses.tolist() == [0.1, -2.5]
