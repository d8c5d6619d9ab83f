import numpy as np
import pytest

from qlorentz.io import FormatError, load_array, read_table, save_array, write_table


def test_table_round_trip_is_lossless(tmp_path):
    rows = np.random.default_rng(0).normal(size=(5, 3)) * 1e-7
    write_table(tmp_path / "t.txt", "demo", {"a": [1, 2], "b": "x"}, ["c1", "c2", "c3"], rows)
    meta, cols, back = read_table(tmp_path / "t.txt", "demo")
    assert meta == {"a": [1, 2], "b": "x"}
    assert cols == ["c1", "c2", "c3"]
    assert np.array_equal(back, rows)


def test_table_errors(tmp_path):
    with pytest.raises(FormatError):
        write_table(tmp_path / "t.txt", "demo", {}, ["a"], [[1.0, 2.0]])
    write_table(tmp_path / "t.txt", "demo", {}, ["a", "b"], [[1.0, 2.0]])
    with pytest.raises(FormatError):
        read_table(tmp_path / "t.txt", "other")
    path = tmp_path / "bad.txt"
    path.write_text("# format: demo\n# columns: a b\n1.0 oops\n")
    with pytest.raises(FormatError):
        read_table(path)
    path.write_text("# format: demo\n# columns: a b\n1.0 2.0 3.0\n")
    with pytest.raises(FormatError):
        read_table(path)
    path.write_text("# format: demo\n1.0 2.0\n")
    with pytest.raises(FormatError):
        read_table(path)


def test_array_sidecar(tmp_path):
    arr = (np.arange(12) + 1j).reshape(3, 4)
    save_array(tmp_path / "a", arr, {"note": "x"})
    back, meta = load_array(tmp_path / "a")
    assert np.array_equal(back, arr) and meta["note"] == "x" and meta["shape"] == [3, 4]
    np.save(tmp_path / "a.npy", arr[:2])
    with pytest.raises(FormatError):
        load_array(tmp_path / "a")
