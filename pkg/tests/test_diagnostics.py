"""Tests for diagnostics, stop detection and lump fitting."""
import numpy as np
import pytest

from kp_spectral.diagnostics import (
    DiagnosticsMonitor, DiagnosticsRecord, Peak, StopKind, delta, detect_stop, energy, find_peaks, fit_lump,
    fit_lumps, fourier_decay, gradient_ratio, is_resolved, mass, norms, transverse_moment,
)
from kp_spectral.errors import ConfigurationError, FitError, UndefinedDeltaError
from kp_spectral.integrator import StepState
from kp_spectral.model import KPParams, gaussian_dxx, lump
from kp_spectral.spectral import Field, make_grid


def field_of(grid, values):
    return Field.from_physical(grid, values)


class TestScalars:
    def test_mass_of_sine(self, grid):
        X, _ = grid.mesh()
        area = 4.0 * np.pi ** 2 * grid.L_x * grid.L_y
        assert mass(field_of(grid, np.sin(X / grid.L_x))) == pytest.approx(area / 2.0, rel=1e-12)

    def test_delta(self):
        assert delta(2.0, 1.5) == pytest.approx(0.25)
        assert delta(2.0, 2.0) == 0.0

    def test_delta_undefined_for_zero_mass(self):
        with pytest.raises(UndefinedDeltaError):
            delta(0.0, 1.0)

    def test_energy_of_x_sine(self, grid, kp2):
        X, _ = grid.mesh()
        area = 4.0 * np.pi ** 2 * grid.L_x * grid.L_y
        e = energy(field_of(grid, np.sin(X / grid.L_x)), kp2)
        assert e == pytest.approx(area / (4.0 * grid.L_x ** 2), rel=1e-12)

    def test_blowup_data_has_negative_energy(self):
        grid = make_grid(5.0, 2.0, 256, 128)
        params = KPParams(p=2, epsilon=-1)
        assert energy(gaussian_dxx(grid, 1.0, 6.0), params) < 0

    def test_small_amplitude_kp1_data_has_positive_energy(self):
        # 4 pi A^2 from the quadratic terms plus 1024 pi / 3 from the cubic one
        grid = make_grid(5.0, 2.0, 256, 128)
        e = energy(gaussian_dxx(grid, 1.0, 12.0), KPParams(p=1, epsilon=-1))
        assert e > 0
        assert e == pytest.approx(2752.0 * np.pi / 3.0, rel=1e-8)

    def test_norms(self, grid):
        _, Y = grid.mesh()
        linf, l2_uy = norms(field_of(grid, np.cos(2.0 * Y / grid.L_y)))
        area = 4.0 * np.pi ** 2 * grid.L_x * grid.L_y
        assert linf == pytest.approx(1.0)
        assert l2_uy == pytest.approx(np.sqrt((2.0 / grid.L_y) ** 2 * area / 2.0), rel=1e-12)

    def test_transverse_moment_of_gaussian(self, grid):
        _, Y = grid.mesh()
        expected = 2.0 * np.pi * grid.L_x * np.sqrt(np.pi / 2.0) / 4.0
        assert transverse_moment(field_of(grid, np.exp(-Y ** 2))) == pytest.approx(expected, rel=1e-9)


class TestResolution:
    def test_zero_field(self, grid):
        assert fourier_decay(field_of(grid, np.zeros(grid.shape))) == 0.0

    def test_low_mode_is_resolved(self, grid):
        X, Y = grid.mesh()
        decay = fourier_decay(field_of(grid, np.sin(X / grid.L_x) * np.cos(Y / grid.L_y)))
        assert is_resolved(decay)

    def test_noise_is_not_resolved(self, grid):
        u = np.random.default_rng(3).standard_normal(grid.shape)
        assert not is_resolved(fourier_decay(field_of(grid, u)))

    def test_record_resolved_property(self):
        rec = DiagnosticsRecord(t=0.0, mass=1.0, delta=0.0, linf=1.0, l2_uy=0.0, energy=0.0)
        assert rec.resolved is None
        assert DiagnosticsRecord(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, fourier_decay=1e-8).resolved is True
        assert "stop" not in rec.as_row()


class TestGradientRatio:
    def test_ratio(self, grid):
        X, Y = grid.mesh()
        u = np.sin(X / grid.L_x) + np.sin(3.0 * Y / grid.L_y)
        assert gradient_ratio(field_of(grid, u)) == pytest.approx((3.0 / grid.L_y) / (1.0 / grid.L_x), rel=1e-10)

    def test_degenerate_fields(self, grid):
        _, Y = grid.mesh()
        assert gradient_ratio(field_of(grid, np.zeros(grid.shape))) == 0.0
        assert gradient_ratio(field_of(grid, np.sin(Y / grid.L_y))) == float("inf")


class TestStop:
    def record(self, **kwargs):
        base = dict(t=0.5, mass=1.0, delta=0.0, linf=1.0, l2_uy=1.0, energy=0.0)
        return DiagnosticsRecord(**(base | kwargs))

    def test_no_stop(self):
        assert detect_stop(self.record(delta=1e-6)) is None

    def test_delta_exceeded(self):
        stop = detect_stop(self.record(delta=1e-3))
        assert stop.kind is StopKind.DELTA_EXCEEDED
        assert stop.t_stop == 0.5

    def test_nonfinite_takes_precedence(self):
        stop = detect_stop(self.record(delta=1e-3, energy=float("nan")))
        assert stop.kind is StopKind.NONFINITE

    def test_nonfinite_heavy_value(self):
        assert detect_stop(self.record(fourier_decay=float("inf"))).kind is StopKind.NONFINITE

    @pytest.mark.parametrize("threshold", [0.0, -1.0])
    def test_threshold_must_be_positive(self, threshold):
        with pytest.raises(ConfigurationError, match="threshold"):
            detect_stop(self.record(), threshold)


class TestMonitor:
    def test_heavy_cadence(self, grid, kp2):
        f = gaussian_dxx(grid, 1.0)
        monitor = DiagnosticsMonitor(kp2, heavy_every=3)
        records = [monitor(StepState(0.1 * k, f, k)) for k in range(5)]
        assert [r.fourier_decay is not None for r in records] == [True, False, False, True, False]
        assert [r.I_transverse is not None for r in records] == [True, False, False, True, False]
        assert all(r.delta == 0.0 for r in records)
        assert all(r.stop is None for r in records)

    def test_flags_threshold(self, grid, kp2):
        f = gaussian_dxx(grid, 1.0)
        monitor = DiagnosticsMonitor(kp2, threshold=1e-3)
        monitor(StepState(0.0, f, 0))
        record = monitor(StepState(0.1, f * 1.1, 1))
        assert record.stop is not None
        assert record.stop.kind is StopKind.DELTA_EXCEEDED

    def test_rejects_heavy_every(self, kp2):
        with pytest.raises(ConfigurationError, match="heavy_every"):
            DiagnosticsMonitor(kp2, heavy_every=0)


class TestPeaks:
    @pytest.fixture
    def lump_grid(self):
        return make_grid(20.0, 20.0, 256, 256)

    @pytest.fixture
    def two_lumps(self, lump_grid):
        g = lump_grid
        return lump(g, 1.0, float(g.x_nodes[90]), float(g.y_nodes[128])) \
            + lump(g, 1.2, float(g.x_nodes[170]), float(g.y_nodes[128]))

    def test_two_peaks_highest_first(self, lump_grid, two_lumps):
        peaks = find_peaks(two_lumps)
        assert len(peaks) == 2
        assert peaks[0].x == float(lump_grid.x_nodes[170])
        assert peaks[1].x == float(lump_grid.x_nodes[90])
        assert peaks[0].height > peaks[1].height

    @pytest.mark.parametrize("shift", [-5.0, 3.0])
    def test_locations_ignore_constant_shift(self, lump_grid, two_lumps, shift):
        shifted = Field.from_physical(lump_grid, two_lumps.values() + shift)
        base = [(p.x, p.y) for p in find_peaks(two_lumps)]
        assert [(p.x, p.y) for p in find_peaks(shifted)] == base

    def test_peak_on_periodic_boundary(self, lump_grid):
        f = lump(lump_grid, 1.0, float(lump_grid.x_nodes[0]), float(lump_grid.y_nodes[0]))
        peaks = find_peaks(f)
        assert len(peaks) == 1
        assert (peaks[0].x, peaks[0].y) == (float(lump_grid.x_nodes[0]), float(lump_grid.y_nodes[0]))

    @pytest.mark.parametrize("threshold", [0.0, 1.5])
    def test_rejects_threshold(self, two_lumps, threshold):
        with pytest.raises(ConfigurationError, match="rel_threshold"):
            find_peaks(two_lumps, threshold)

    def test_fit_recovers_speed(self, lump_grid):
        x0, y0 = float(lump_grid.x_nodes[140]), float(lump_grid.y_nodes[100])
        f = lump(lump_grid, 1.5, x0, y0)
        fit = fit_lump(f, find_peaks(f)[0])
        assert fit.c_fit == pytest.approx(1.5, rel=1e-12)
        assert (fit.x_peak, fit.y_peak) == (x0, y0)
        assert fit.residual_linf == pytest.approx(0.0, abs=1e-12)

    def test_fit_rejects_nonpositive_height(self, lump_grid):
        f = lump(lump_grid, 1.0)
        with pytest.raises(FitError):
            fit_lump(f, Peak(0.0, 0.0, -1.0))

    def test_fit_lumps_subtracts_each_fit(self, two_lumps):
        fits, residual = fit_lumps(two_lumps)
        assert [round(fit.c_fit, 1) for fit in fits] == [1.2, 1.0]
        assert np.max(np.abs(residual.values())) < 0.1 * np.max(two_lumps.values())

    def test_fit_lumps_count(self, two_lumps):
        fits, _ = fit_lumps(two_lumps, count=1)
        assert len(fits) == 1
        assert fits[0].c_fit == pytest.approx(1.2, rel=1e-2)
