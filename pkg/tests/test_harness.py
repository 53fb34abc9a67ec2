"""End-to-end tests of run_experiment on small grids."""
import json
import logging
from dataclasses import replace
from logging.handlers import RotatingFileHandler

import numpy as np
import pandas as pd
import pytest

from kp_spectral.config import RunConfig
from kp_spectral.diagnostics import StopKind
from kp_spectral.errors import MemoryBudgetError, UndefinedDeltaError
from kp_spectral.harness import fit_snapshot, run_experiment, snapshot_steps
from kp_spectral.model import InitialTerm, KPParams, lump
from kp_spectral.spectral import make_grid
from kp_spectral.storage import SNAPSHOT_DIR, SUMMARY_FILE, TIMESERIES_FILE, load_snapshot, save_snapshot


@pytest.fixture
def small_run(tmp_path):
    return RunConfig(
        params=KPParams(p=1, epsilon=1), L_x=6.0, L_y=1.0, N_x=128, N_y=8, T=0.5, N_t=50,
        initial=(InitialTerm("kdv_soliton", {"c": 1.0}),),
        snapshot_times=(0.0, 0.25, 0.5), cadence=5, output_dir=tmp_path / "run",
    )


class TestRunExperiment:
    def test_writes_artifacts(self, small_run, settings):
        result = run_experiment(small_run, settings)
        run_dir = small_run.output_dir

        assert result.stop is None
        assert len(result.records) == 11
        times = [r.t for r in result.records]
        assert times == sorted(times)
        assert times[-1] == pytest.approx(0.5)
        assert result.records[-1].delta < 1e-6

        assert sorted(p.name for p in (run_dir / SNAPSHOT_DIR).iterdir()) == [
            "t_0.000000.kplb", "t_0.250000.kplb", "t_0.500000.kplb",
        ]
        final, t = load_snapshot(run_dir / SNAPSHOT_DIR / "t_0.500000.kplb")
        assert t == pytest.approx(0.5)
        assert np.array_equal(final.values(), result.final.values())

        series = pd.read_csv(run_dir / TIMESERIES_FILE)
        assert len(series) == 11
        summary = json.loads((run_dir / SUMMARY_FILE).read_text())
        assert summary["stop"] is None
        assert summary["records"] == 11
        assert summary["config"]["grid"]["Nx"] == 128
        assert "run_experiment" in (run_dir / "run.log").read_text()

    def test_detaches_run_log(self, small_run, settings):
        run_experiment(small_run, settings)
        handlers = logging.getLogger("kp_spectral").handlers
        assert not any(isinstance(h, RotatingFileHandler) for h in handlers)

    def test_deterministic(self, small_run, settings, tmp_path):
        a = run_experiment(replace(small_run, output_dir=tmp_path / "a"), settings)
        b = run_experiment(replace(small_run, output_dir=tmp_path / "b"), settings)
        assert np.array_equal(a.final.values(), b.final.values())
        pd.testing.assert_frame_equal(pd.read_csv(tmp_path / "a" / TIMESERIES_FILE),
                                      pd.read_csv(tmp_path / "b" / TIMESERIES_FILE))

    def test_threshold_stop_writes_final_snapshot(self, small_run, settings):
        result = run_experiment(replace(small_run, stop_threshold=1e-300, snapshot_times=()), settings)
        assert result.stop is not None
        assert result.stop.kind is StopKind.DELTA_EXCEEDED
        assert result.records[-1].t == result.stop.t_stop
        assert all(r.t <= result.stop.t_stop for r in result.records)
        assert [t for t, _ in result.snapshots] == [result.stop.t_stop]
        summary = json.loads((small_run.output_dir / SUMMARY_FILE).read_text())
        assert summary["stop"]["kind"] == "delta_exceeded"

    def test_refuses_over_budget(self, small_run, settings):
        settings.memory_budget_mb = 0.001
        with pytest.raises(MemoryBudgetError, match="Reduce the resolution"):
            run_experiment(small_run, settings)

    def test_zero_mass_is_rejected(self, small_run, settings):
        cfg = replace(small_run, initial=(InitialTerm("kdv_soliton", {"c": 1.0}, scale=0.0),))
        with pytest.raises(UndefinedDeltaError):
            run_experiment(cfg, settings)

    def test_snapshots_can_be_disabled(self, small_run, settings):
        result = run_experiment(replace(small_run, write_snapshots=False), settings)
        assert result.snapshots == []
        assert not (small_run.output_dir / SNAPSHOT_DIR).exists()

    def test_default_output_dir_uses_settings(self, small_run, settings):
        result = run_experiment(replace(small_run, output_dir=None, preset="tiny"), settings)
        assert result.output_dir.parent.name == "runs"
        assert result.output_dir.name.startswith("tiny-")


def test_snapshot_steps(small_run):
    cfg = replace(small_run, snapshot_times=(0.0, 0.25, 0.251, 0.5))
    assert snapshot_steps(cfg) == {0: [0.0], 25: [0.25, 0.251], 50: [0.5]}


def test_fit_snapshot(tmp_path):
    grid = make_grid(20.0, 20.0, 128, 128)
    x0, y0 = float(grid.x_nodes[70]), float(grid.y_nodes[60])
    path = save_snapshot(lump(grid, 1.5, x0, y0), 2.0, tmp_path / "lump.kplb")
    report = fit_snapshot(path)
    assert report["t"] == 2.0
    assert len(report["peaks"]) == 1
    assert report["peaks"][0]["c_fit"] == pytest.approx(1.5)
    assert report["residual_max"] == pytest.approx(0.0, abs=1e-12)
