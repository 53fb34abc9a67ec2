"""Tests for snapshots, time-series tables and exports."""
import numpy as np
import pandas as pd
import pytest

from kp_spectral.diagnostics import DiagnosticsRecord
from kp_spectral.errors import ConfigurationError, SnapshotFormatError
from kp_spectral.spectral import Field
from kp_spectral.storage import (
    HEADER, MAGIC, SNAPSHOT_DIR, TIMESERIES_COLUMNS, TIMESERIES_FILE, export_run, list_snapshots, load_snapshot,
    norms_frame, read_matrix, read_timeseries, records_frame, save_snapshot, snapshot_name, write_timeseries,
)


@pytest.fixture
def field(grid):
    return Field.from_physical(grid, np.random.default_rng(5).standard_normal(grid.shape))


def records():
    return [
        DiagnosticsRecord(0.0, 2.0, 0.0, 4.0, 1.0, -1.0, I_transverse=3.0, fourier_decay=1e-9),
        DiagnosticsRecord(0.5, 2.0, 1e-12, 3.0, 2.0, -1.0),
        DiagnosticsRecord(1.0, 2.0, 2e-12, 2.0, 4.0, -1.0, I_transverse=3.5, fourier_decay=1e-3),
    ]


class TestSnapshots:
    def test_round_trip_is_bit_exact(self, tmp_path, field):
        path = save_snapshot(field, 0.125, tmp_path / "deep" / "snap.kplb")
        loaded, t = load_snapshot(path)
        assert t == 0.125
        assert loaded.grid == field.grid
        assert np.array_equal(loaded.values(), field.values())

    def test_file_size(self, tmp_path, field, grid):
        path = save_snapshot(field, 0.0, tmp_path / "snap.kplb")
        assert path.stat().st_size == len(MAGIC) + HEADER.size + 8 * grid.N_x * grid.N_y

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.kplb"
        path.write_bytes(b"NOPE!" + bytes(64))
        with pytest.raises(SnapshotFormatError, match="bad magic"):
            load_snapshot(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "short.kplb"
        path.write_bytes(MAGIC + bytes(10))
        with pytest.raises(SnapshotFormatError, match="truncated header"):
            load_snapshot(path)

    def test_truncated_payload(self, tmp_path, field):
        path = save_snapshot(field, 0.0, tmp_path / "snap.kplb")
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(SnapshotFormatError, match="payload has"):
            load_snapshot(path)

    def test_invalid_grid(self, tmp_path):
        path = tmp_path / "grid.kplb"
        path.write_bytes(MAGIC + HEADER.pack(3, 4, 1.0, 1.0, 0.0) + bytes(8 * 12))
        with pytest.raises(SnapshotFormatError, match="invalid grid"):
            load_snapshot(path)

    def test_listing_is_time_ordered(self, tmp_path, field):
        for t in (10.0, 2.0, 0.5):
            save_snapshot(field, t, tmp_path / SNAPSHOT_DIR / snapshot_name(t))
        assert [p.name for p in list_snapshots(tmp_path)] == [
            "t_0.500000.kplb", "t_2.000000.kplb", "t_10.000000.kplb",
        ]


class TestTimeseries:
    def test_columns_and_missing_heavy_values(self):
        frame = records_frame(records())
        assert list(frame.columns) == TIMESERIES_COLUMNS
        assert pd.isna(frame.loc[1, "fourier_decay"])
        assert frame.loc[2, "I_transverse"] == 3.5

    def test_csv_round_trip(self, tmp_path):
        path = write_timeseries(records(), tmp_path / TIMESERIES_FILE)
        frame = read_timeseries(path)
        assert frame["delta"].tolist() == [r.delta for r in records()]
        assert frame["energy"].tolist() == [r.energy for r in records()]
        assert frame["t"].is_monotonic_increasing

    def test_read_rejects_missing_columns(self, tmp_path):
        path = tmp_path / TIMESERIES_FILE
        path.write_text("t,mass\n0,1\n")
        with pytest.raises(ConfigurationError, match="missing time-series columns"):
            read_timeseries(path)

    def test_norms_are_normalized(self):
        frame = norms_frame(records_frame(records()))
        assert frame["linf"].tolist() == [1.0, 0.75, 0.5]
        assert frame["l2_uy"].tolist() == [1.0, 2.0, 4.0]
        assert frame.loc[0, "resolved"]
        assert pd.isna(frame.loc[1, "resolved"])
        assert not frame.loc[2, "resolved"]


class TestExport:
    def test_writes_norms_and_matrices(self, tmp_path, field, grid):
        write_timeseries(records(), tmp_path / TIMESERIES_FILE)
        save_snapshot(field, 0.5, tmp_path / SNAPSHOT_DIR / snapshot_name(0.5))
        written = export_run(tmp_path)
        assert set(written) == {"norms", "t_0.500000"}
        matrix = read_matrix(written["t_0.500000"])
        assert matrix.shape == grid.shape
        np.testing.assert_array_equal(matrix.to_numpy(), field.values())
        np.testing.assert_array_equal(matrix.index.to_numpy(), grid.x_nodes)
        np.testing.assert_array_equal(matrix.columns.to_numpy(), grid.y_nodes)
        assert written["norms"].parent == tmp_path / "export"

    def test_custom_directory(self, tmp_path):
        write_timeseries(records(), tmp_path / TIMESERIES_FILE)
        written = export_run(tmp_path, tmp_path / "plots")
        assert written["norms"] == tmp_path / "plots" / "norms.csv"

    def test_requires_timeseries(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            export_run(tmp_path)
