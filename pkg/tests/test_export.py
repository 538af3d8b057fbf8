"""Tests for CSV, SVG and triplet output (src/export.py)."""

import math

import numpy as np
import pytest

from src.coefficients import rational_bump
from src.discretize import assemble, line_grid
from src.export import (
    csv_text,
    format_value,
    plot_intervals,
    plot_series,
    read_csv,
    read_triplets,
    write_csv,
    write_triplets,
)


class TestFormatValue:
    @pytest.mark.parametrize(
        "value, expected",
        [
            (None, ""),
            (True, "true"),
            (np.bool_(False), "false"),
            (7, "7"),
            (np.int64(-3), "-3"),
            (0.0, "0"),
            (math.nan, "nan"),
            (math.inf, "inf"),
            (-math.inf, "-inf"),
            (0.1, "0.1"),
            (1 / 3, "0.333333333333333"),
            ("Dirichlet", "Dirichlet"),
        ],
    )
    def test_values(self, value, expected):
        assert format_value(value) == expected

    def test_tiny_values_use_exponent(self):
        text = format_value(1.5e-9)
        assert "e-09" in text
        assert float(text) == pytest.approx(1.5e-9)


class TestCsv:
    def test_crlf_and_header(self):
        text = csv_text(["a", "b"], [[1, 0.5], [2, "x,y"]])
        assert text == 'a,b\r\n1,0.5\r\n2,"x,y"\r\n'

    def test_row_length_checked(self):
        with pytest.raises(ValueError, match="header has 2"):
            csv_text(["a", "b"], [[1]])

    def test_write_and_read(self, tmp_path):
        path = write_csv(tmp_path / "out" / "t.csv", ["L", "norm"], [[10, 0.25], [20, 0.125]])
        header, rows = read_csv(path)
        assert header == ["L", "norm"]
        assert rows == [["10", "0.25"], ["20", "0.125"]]
        assert not list(path.parent.glob("*.tmp"))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        assert read_csv(path) == ([], [])


class TestPlots:
    def test_series_is_deterministic(self, tmp_path):
        first = plot_series(tmp_path / "a.svg", [1, 2, 3], {"norm": [0.1, 0.2, 0.4]}, xlabel="k", ylabel="norm")
        second = plot_series(tmp_path / "b.svg", [1, 2, 3], {"norm": [0.1, 0.2, 0.4]}, xlabel="k", ylabel="norm")
        assert first.read_text().startswith("<?xml")
        assert first.read_bytes() == second.read_bytes()

    def test_intervals(self, tmp_path):
        path = plot_intervals(tmp_path / "i.svg", {"estimate": [(0, 1), (2, 3)], "union": [(0, 3)]}, title="x")
        assert path.exists()
        assert not list(tmp_path.glob("*.tmp"))


class TestTriplets:
    def test_round_trip(self, tmp_path):
        op = assemble(rational_bump(), line_grid(-2, 2, 12))
        path = write_triplets(tmp_path / "op.txt", op)
        assert path.read_text().startswith("# ")
        rows, cols, values = read_triplets(path)
        rebuilt = np.zeros((12, 12))
        rebuilt[rows, cols] = values
        assert np.array_equal(rebuilt, op.dense())
