import csv

import numpy as np
import pytest

from graphs.grid import FieldPath, make_grid
from graphs.measures import path_to_measure_path
from utils.io import read_binary, write_binary, write_field_csv, write_results_csv
from utils.metrics import CheckResult


@pytest.fixture
def small():
    return make_grid(1.0, 4, 1.0, 2)


class TestBinary:
    def test_header_and_data(self, small, tmp_path):
        frames = np.arange(15, dtype=np.float64).reshape(3, 5)
        path = str(tmp_path / "v.bin")
        write_binary(path, frames, small, "field-path")
        role, grid, data = read_binary(path)
        assert role == "field-path"
        assert grid == small
        assert np.array_equal(data, frames)
        with open(path, "rb") as dump:
            assert dump.read(4) == b"MDPF"

    def test_control_role(self, small, tmp_path):
        path = str(tmp_path / "h.bin")
        write_binary(path, np.ones((2, 7)), small, "control")
        role, _, data = read_binary(path)
        assert role == "control" and data.shape == (2, 7)

    def test_rejects_foreign_files(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + bytes(60))
        with pytest.raises(ValueError):
            read_binary(str(path))
        path.write_bytes(b"MD")
        with pytest.raises(ValueError):
            read_binary(str(path))

    def test_unknown_role(self, small, tmp_path):
        with pytest.raises(ValueError):
            write_binary(str(tmp_path / "x.bin"), np.ones((3, 5)), small, "histogram")


class TestCsv:
    def test_long_format(self, small, tmp_path):
        v = FieldPath(small, np.outer(small.times, small.nodes))
        path = str(tmp_path / "v.csv")
        write_field_csv(path, v)
        with open(path) as csv_file:
            rows = list(csv.DictReader(csv_file))
        assert len(rows) == 3 * 5
        assert float(rows[-1]["t"]) == 1.0 and float(rows[-1]["y"]) == 1.0 and float(rows[-1]["value"]) == 1.0

    def test_measure_cells_at_left_nodes(self, small, tmp_path):
        omega = path_to_measure_path(FieldPath(small, np.outer(small.times, small.nodes)))
        path = str(tmp_path / "omega.csv")
        write_field_csv(path, omega)
        with open(path) as csv_file:
            rows = list(csv.DictReader(csv_file))
        assert len(rows) == 3 * 4
        assert max(float(r["y"]) for r in rows) == pytest.approx(0.5)

    def test_results_table(self, tmp_path):
        path = str(tmp_path / "results.csv")
        write_results_csv(path, [CheckResult("a", True, 1.0, 1.0, 0.1), CheckResult("b", False, 2.0, 1.0, 0.1)])
        with open(path) as csv_file:
            rows = list(csv.reader(csv_file))
        assert rows[0] == ["name", "pass", "observed", "target", "tol", "se", "runtime_s"]
        assert [r[0] for r in rows[1:]] == ["a", "b"]
