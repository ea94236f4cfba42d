import math

import numpy as np
import pytest
import yaml

from hetprobe.bundle import SUMMARY_FILE, ResultBundle, Table, read_table, to_plain, write_table
from hetprobe.errors import InvalidArgumentError


def test_table_from_columns():
    table = Table.from_columns({"f0": [1.0, 2.0], "phi": [0.1, 0.2]}, comments=["field=0.6"])
    assert table.columns == ("f0", "phi")
    assert table.data.shape == (2, 2)
    np.testing.assert_array_equal(table.column("phi"), [0.1, 0.2])
    assert table.comments == ("field=0.6",)


def test_table_rejects_column_mismatch():
    with pytest.raises(InvalidArgumentError):
        Table(columns=("a", "b"), data=np.zeros((3, 3)))


def test_table_round_trips_full_precision(tmp_path):
    values = np.array([1 / 3, math.pi * 1e-7, -2.718281828459045e12, math.nan])
    table = Table.from_columns({"x": values, "y": values[::-1]}, comments=["waist=1e-4"])
    path = str(tmp_path / "t.csv")
    write_table(path, table, header=["hetprobe test"])

    with open(path) as file:
        lines = file.read().splitlines()
    assert lines[:3] == ["# hetprobe test", "# waist=1e-4", "x,y"]

    loaded = read_table(path)
    assert loaded.columns == ("x", "y")
    assert loaded.comments == ("hetprobe test", "waist=1e-4")
    np.testing.assert_array_equal(loaded.data, table.data)


def test_read_table_without_rows(tmp_path):
    path = str(tmp_path / "empty.csv")
    write_table(path, Table(columns=("a", "b"), data=np.empty((0, 2))))
    assert read_table(path).data.shape == (0, 2)


def test_read_table_requires_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# only a comment\n")
    with pytest.raises(InvalidArgumentError):
        read_table(str(path))


def test_to_plain():
    value = {"a": np.float64(1.5), "b": (np.int64(2), np.bool_(True)), 3: np.arange(2)}
    assert to_plain(value) == {"a": 1.5, "b": [2, True], "3": [0, 1]}
    assert type(to_plain(np.float64(1.5))) is float


def test_bundle_write(tmp_path):
    bundle = ResultBundle(
        scenario="spectrum",
        tables={"spectrum": Table.from_columns({"f0": [0.0, 1.0], "phi": [0.5, 0.25]})},
        summary={"rho": np.float64(2.2e12), "checks": {"column_density_recovered": np.bool_(True)}},
        provenance={"seed": 3},
    )
    written = bundle.write(str(tmp_path / "out"))
    csv_path = str(tmp_path / "out" / "spectrum_spectrum.csv")
    summary_path = str(tmp_path / "out" / SUMMARY_FILE)
    assert written == [csv_path, summary_path]

    with open(summary_path) as file:
        document = yaml.safe_load(file)
    assert document["scenario"] == "spectrum"
    assert document["tables"] == {"spectrum": "spectrum_spectrum.csv"}
    assert document["summary"]["rho"] == 2.2e12
    assert document["summary"]["checks"] == {"column_density_recovered": True}
    assert document["provenance"] == {"seed": 3}
    assert read_table(csv_path).columns == ("f0", "phi")


def test_bundle_passed():
    assert ResultBundle(scenario="fit").passed
    assert ResultBundle(scenario="fit", summary={"checks": {"a": True, "b": np.bool_(True)}}).passed
    assert not ResultBundle(scenario="fit", summary={"checks": {"a": True, "b": False}}).passed
