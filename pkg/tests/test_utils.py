"""Tests for artifact writers, sample loading, noise injection and timing."""

import time

import numpy as np
import pytest

from thermomem.core.errors import ConfigError
from thermomem.numerics.grid import SpaceGrid, SpaceTimeField, TimeGrid, TimeSeries
from thermomem.utils.utils import inject_noise, load_samples, save_field, save_series, timed


class TestCsvArtifacts:
    """Tests for save_series, save_field and load_samples."""

    def test_series_written_with_header(self, tmp_path):
        grid = TimeGrid.uniform(1.0, 4)
        path = save_series(TimeSeries(grid, grid.nodes**2), tmp_path / "h.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "t,value"
        assert len(lines) == 6

    def test_series_reloads_exactly(self, tmp_path):
        grid = TimeGrid.uniform(1.0, 7)
        values = np.exp(-grid.nodes) / 3.0
        t, loaded = load_samples(save_series(TimeSeries(grid, values), tmp_path / "g.csv"))
        np.testing.assert_array_equal(t, grid.nodes)
        np.testing.assert_array_equal(loaded, values)

    def test_field_layout(self, tmp_path):
        """One row per time node, time in the first column."""
        tgrid, sgrid = TimeGrid.uniform(1.0, 2), SpaceGrid(4)
        field = SpaceTimeField(tgrid, sgrid, np.arange(15, dtype=float).reshape(3, 5))
        path = save_field(field, tmp_path / "u.csv")
        header, *rows = path.read_text().splitlines()
        assert header == "t,x_0,x_1,x_2,x_3,x_4"
        table = np.loadtxt(rows, delimiter=",")
        np.testing.assert_array_equal(table[:, 0], tgrid.nodes)
        np.testing.assert_array_equal(table[:, 1:], field.values)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_samples(tmp_path / "absent.csv")

    def test_wrong_shape(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,a,b\n0,1,2\n1,3,4\n")
        with pytest.raises(ConfigError, match="two columns"):
            load_samples(path)

    def test_unsorted_abscissae(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,value\n1,0\n0,1\n")
        with pytest.raises(ConfigError, match="increasing"):
            load_samples(path)

    def test_unparseable(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,value\nzero,one\n1,2\n")
        with pytest.raises(ConfigError, match="parse"):
            load_samples(path)


class TestInjectNoise:
    """Tests for inject_noise."""

    def test_seeded_noise_reproducible(self):
        g = TimeSeries.zeros(TimeGrid.uniform(1.0, 50))
        a = inject_noise(g, 1e-3, seed=7)
        b = inject_noise(g, 1e-3, seed=7)
        np.testing.assert_array_equal(a.values, b.values)
        assert np.all(np.abs(a.values) <= 1e-3)
        assert np.any(a.values != 0.0)

    def test_offset_only(self):
        g = TimeSeries.constant(TimeGrid.uniform(1.0, 5), 1.0)
        np.testing.assert_array_equal(inject_noise(g, 0.0, offset=0.5).values, 1.5)

    def test_zero_noise_is_identity(self):
        grid = TimeGrid.uniform(1.0, 5)
        g = TimeSeries(grid, np.sin(grid.nodes))
        np.testing.assert_array_equal(inject_noise(g, 0.0).values, g.values)

    def test_negative_amplitude(self):
        with pytest.raises(ValueError, match="amplitude"):
            inject_noise(TimeSeries.zeros(TimeGrid.uniform(1.0, 5)), -1.0)


class TestTimed:
    def test_elapsed_recorded(self):
        with timed() as clock:
            time.sleep(0.01)
        assert clock["seconds"] >= 0.005
