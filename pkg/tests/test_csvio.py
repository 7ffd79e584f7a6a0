import numpy as np
import pytest

from colagg.csvio import read_csv, shard_paths, write_csv
from colagg.errors import IoFailure, ParseError, UsageError
from colagg.table import DataType, Table, tables_value_equal


def test_single_row(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("k,v\n1,2.5\n")
    t = read_csv(p)
    assert t.schema.fields == (("k", DataType.INT64), ("v", DataType.FLOAT64))
    assert t.to_pydict() == {"k": [1], "v": [2.5]}


def test_round_trip_random_table(tmp_path):
    rng = np.random.default_rng(4)
    t = Table.from_pydict(
        {
            "i": rng.integers(-(10**12), 10**12, 1000).tolist(),
            "f": rng.uniform(-1e9, 1e9, 1000).tolist(),
            "s": [f"row-{i},{i}" for i in range(1000)],
        }
    )
    p = tmp_path / "t.csv"
    write_csv(t, p)
    assert tables_value_equal(read_csv(p), t)


def test_float_bit_round_trip(tmp_path):
    vals = [0.1, 1 / 3, 2.0**-1074, 1.7976931348623157e308]
    t = Table.from_pydict({"f": vals})
    p = tmp_path / "t.csv"
    write_csv(t, p)
    back = read_csv(p)
    assert (back.columns[0].numpy().view("i8") == t.columns[0].numpy().view("i8")).all()


def test_ragged_row_parse_error(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b\n1,2\n1,2,3\n")
    with pytest.raises(ParseError) as err:
        read_csv(p)
    assert err.value.line == 3


def test_empty_file(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("")
    with pytest.raises(ParseError):
        read_csv(p)


def test_missing_file():
    with pytest.raises(IoFailure):
        read_csv("/nonexistent/path.csv")


def test_type_inference(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b,c,d\n1,1.0,x,99999999999999999999\n-2,1e3,2,1\n")
    t = read_csv(p)
    assert [d for _, d in t.schema.fields] == [
        DataType.INT64,    # all parse as ints
        DataType.FLOAT64,  # "1.0" and "1e3" are floats, not ints
        DataType.UTF8,     # "x" forces text ("2" stays the string "2")
        DataType.FLOAT64,  # 20 digits exceeds int64
    ]
    assert t.columns[2].pylist() == ["x", "2"]


def test_header_only(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b\n")
    t = read_csv(p)
    assert t.num_rows == 0 and len(t.columns) == 2


def test_shard_paths_sorted(tmp_path):
    for name in ("part-2.csv", "part-0.csv", "part-1.csv", "notes.txt"):
        (tmp_path / name).write_text("k\n1\n")
    paths = shard_paths(tmp_path)
    assert [p.name for p in paths] == ["part-0.csv", "part-1.csv", "part-2.csv"]


def test_shard_paths_empty_dir(tmp_path):
    with pytest.raises(UsageError):
        shard_paths(tmp_path)
