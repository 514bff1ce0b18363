import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from filterlab.io import path_rows, read_csv, write_csv


@given(values=st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_floats_round_trip_exactly(tmp_path_factory, values):
    p = tmp_path_factory.mktemp("csv") / "v.csv"
    write_csv(p, ["i", "v"], [(np.int64(i), np.float64(v)) for i, v in enumerate(values)])
    back = read_csv(p)
    assert [float(r["v"]) for r in back] == values
    assert [int(r["i"]) for r in back] == list(range(len(values)))


def test_format_is_plain_utf8_with_unix_newlines(tmp_path):
    p = write_csv(tmp_path / "sub" / "a.csv", ["name", "x"], [("é", 0.1), ("b", 2)])
    raw = p.read_bytes()
    assert b"\r\n" not in raw
    assert raw.decode("utf-8") == "name,x\né,0.10000000000000001\nb,2\n"


def test_path_rows_layout():
    t = np.linspace(0, 1, 3)
    rows = list(path_rows(t, np.arange(6.0).reshape(3, 2)))
    assert rows[2] == [1.0, 4.0, 5.0]
