"""Tests for settings, run configs, TOML loading and the preset catalog."""
from fractions import Fraction
from pathlib import Path

import pytest

from kp_spectral.config import RunConfig, Settings, apply_overrides, load_config, load_settings
from kp_spectral.errors import ConfigurationError
from kp_spectral.model import InitialTerm, KPParams
from kp_spectral.presets import PRESETS, get_preset, list_presets, zaitsev_ly

SOLITON = """
[model]
p = 1
epsilon = 1

[grid]
Lx = 8.0
Ly = 8.0
Nx = 64
Ny = 32

[time]
T = 0.5
Nt = 100
cadence = 5

[output]
snapshot_times = [0.0, 0.25, 0.5]

[[initial]]
name = "a_sech2"
amplitude = 12.0
c = 4.0
x0 = -16.0
"""


def write(tmp_path: Path, text: str, name: str = "run.toml") -> Path:
    path = tmp_path / name
    path.write_text(text)
    return path


class TestSettings:
    def test_defaults(self):
        settings = load_settings()
        assert settings == Settings()

    def test_reads_environment(self, monkeypatch):
        monkeypatch.setenv("KP_WORKERS", "4")
        monkeypatch.setenv("KP_MEMORY_BUDGET_MB", "512.5")
        monkeypatch.setenv("KP_OUTPUT_DIR", "/tmp/kp")
        monkeypatch.setenv("KP_HEAVY_EVERY", "3")
        monkeypatch.setenv("LOG_LEVEL", "debug")
        settings = load_settings()
        assert (settings.workers, settings.memory_budget_mb, settings.output_dir) == (4, 512.5, "/tmp/kp")
        assert settings.heavy_every == 3
        assert settings.log_level == "DEBUG"

    @pytest.mark.parametrize("name, value, match", [
        ("KP_WORKERS", "many", "KP_WORKERS must be a int"),
        ("KP_WORKERS", "0", "nonzero"),
        ("KP_MEMORY_BUDGET_MB", "-1", "positive"),
        ("KP_HEAVY_EVERY", "0", ">= 1"),
        ("LOG_LEVEL", "LOUD", "logging level"),
    ])
    def test_invalid_values(self, monkeypatch, name, value, match):
        monkeypatch.setenv(name, value)
        with pytest.raises(ConfigurationError, match=match):
            load_settings()


class TestRunConfig:
    def base(self, **changes):
        fields = dict(params=KPParams(), L_x=8.0, L_y=8.0, N_x=64, N_y=32, T=1.0, N_t=10,
                      initial=(InitialTerm("a_sech2", {"amplitude": 12.0, "c": 4.0}),))
        return RunConfig(**(fields | changes))

    def test_dt_and_grid(self):
        cfg = self.base()
        assert cfg.dt == pytest.approx(0.1)
        assert cfg.grid.shape == (64, 32)

    @pytest.mark.parametrize("changes, match", [
        ({"N_x": 48}, "power of two"),
        ({"T": 0.0}, "T must be positive"),
        ({"N_t": 0}, "N_t"),
        ({"initial": ()}, "at least one"),
        ({"snapshot_times": (0.0, 2.0)}, "outside"),
        ({"cadence": 0}, "cadence"),
        ({"stop_threshold": 0.0}, "threshold"),
        ({"stepper": "rk45"}, "Unknown stepper"),
    ])
    def test_validation(self, changes, match):
        with pytest.raises(ConfigurationError, match=match):
            self.base(**changes)

    def test_memory_estimate(self):
        assert self.base(N_x=2 ** 11, N_y=2 ** 13).memory_estimate_mb() == pytest.approx(6144.0)

    def test_overrides(self, tmp_path):
        cfg = self.base(snapshot_times=(0.0, 0.5, 1.0))
        changed = apply_overrides(cfg, nx=128, nt=20, tmax=0.6, out=tmp_path)
        assert (changed.N_x, changed.N_y, changed.N_t, changed.T) == (128, 32, 20, 0.6)
        assert changed.snapshot_times == (0.0, 0.5)
        assert changed.output_dir == tmp_path

    def test_no_overrides_is_identity(self):
        cfg = self.base()
        assert apply_overrides(cfg) == cfg

    def test_as_dict_echo(self):
        echo = self.base(params=KPParams(p="4/3", epsilon=-1)).as_dict()
        assert echo["model"]["p"] == "4/3"
        assert echo["grid"] == {"Lx": 8.0, "Ly": 8.0, "Nx": 64, "Ny": 32}
        assert echo["initial"][0]["name"] == "a_sech2"


class TestLoadConfig:
    def test_loads_soliton_run(self, tmp_path):
        cfg = load_config(write(tmp_path, SOLITON))
        assert cfg.params == KPParams(p=1, epsilon=1)
        assert (cfg.L_x, cfg.N_x, cfg.N_y, cfg.N_t, cfg.cadence) == (8.0, 64, 32, 100, 5)
        assert cfg.snapshot_times == (0.0, 0.25, 0.5)
        assert cfg.initial == (InitialTerm("a_sech2", {"amplitude": 12.0, "c": 4.0, "x0": -16.0}),)
        assert cfg.heavy_every == 10

    def test_fractional_exponent(self, tmp_path):
        cfg = load_config(write(tmp_path, SOLITON.replace("p = 1", 'p = "4/3"')))
        assert cfg.params.p == Fraction(4, 3)

    def test_missing_key(self, tmp_path):
        with pytest.raises(ConfigurationError, match="Missing required key 'time.Nt'"):
            load_config(write(tmp_path, SOLITON.replace("Nt = 100\n", "")))

    def test_unknown_key_reports_line(self, tmp_path):
        path = write(tmp_path, SOLITON.replace("cadence = 5", "cadence = 5\nsteps = 3"))
        with pytest.raises(ConfigurationError, match=r"run\.toml:16: Unknown key 'time.steps'"):
            load_config(path)

    def test_unknown_constructor_key_reports_line(self, tmp_path):
        path = write(tmp_path, SOLITON.replace("x0 = -16.0", "x0 = -16.0\nwidth = 2.0"))
        with pytest.raises(ConfigurationError, match=r"run\.toml:25: Unknown key 'width' for constructor 'a_sech2'"):
            load_config(path)

    def test_unknown_constructor(self, tmp_path):
        path = write(tmp_path, SOLITON.replace('name = "a_sech2"', 'name = "soliton"'))
        with pytest.raises(ConfigurationError, match=r"run\.toml:21: Unknown constructor: soliton"):
            load_config(path)

    def test_syntax_error(self, tmp_path):
        with pytest.raises(ConfigurationError, match="run.toml"):
            load_config(write(tmp_path, "[grid\nLx = 1"))

    def test_invalid_value(self, tmp_path):
        with pytest.raises(ConfigurationError, match="power of two"):
            load_config(write(tmp_path, SOLITON.replace("Nx = 64", "Nx = 60")))

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_config(tmp_path / "absent.toml")

    def test_preset_with_overrides(self, tmp_path):
        text = 'preset = "soliton-propagation"\n\n[grid]\nNx = 64\nNy = 32\n\n[time]\nNt = 50\nT = 0.1\n\n' \
               '[output]\nsnapshot_times = []\n'
        cfg = load_config(write(tmp_path, text))
        base = get_preset("soliton-propagation")
        assert (cfg.N_x, cfg.N_y, cfg.N_t, cfg.T) == (64, 32, 50, 0.1)
        assert cfg.L_x == base.L_x
        assert cfg.initial == base.initial
        assert cfg.preset == "soliton-propagation"

    def test_unknown_preset(self, tmp_path):
        with pytest.raises(ConfigurationError, match="Unknown preset: nope"):
            load_config(write(tmp_path, 'preset = "nope"\n'))

    def test_zaitsev_periods(self, tmp_path):
        text = """
[model]
epsilon = -1

[grid]
Lx = 10.0
Ly_zaitsev_periods = 5
Nx = 64
Ny = 32

[time]
T = 0.1
Nt = 10

[[initial]]
name = "zaitsev"
alpha = 1.0
beta = 0.5
x0 = -5.0
"""
        cfg = load_config(write(tmp_path, text))
        assert cfg.L_y == pytest.approx(2.5, abs=1e-6)

    def test_zaitsev_periods_need_zaitsev_term(self, tmp_path):
        text = SOLITON.replace("Ly = 8.0", "Ly_zaitsev_periods = 5")
        with pytest.raises(ConfigurationError, match="needs a zaitsev term"):
            load_config(write(tmp_path, text))


class TestPresets:
    def test_every_preset_builds(self):
        for name, description in list_presets():
            cfg = get_preset(name)
            assert cfg.preset == name
            assert description

    def test_soliton_propagation(self):
        cfg = get_preset("soliton-propagation")
        assert cfg.params == KPParams(p=1, epsilon=1)
        assert (cfg.L_x, cfg.L_y, cfg.N_x, cfg.N_y, cfg.N_t, cfg.T) == (8.0, 8.0, 256, 1024, 3200, 6.0)
        assert cfg.initial[0].params == {"amplitude": 12.0, "c": 4.0, "x0": -16.0}
        assert get_preset("soliton-propagation-kp1").params.epsilon == -1

    def test_blowup(self):
        cfg = get_preset("blowup-p2")
        assert cfg.params.p == 2 and cfg.params.epsilon == -1
        assert (cfg.N_x, cfg.N_y, cfg.N_t) == (2 ** 11, 2 ** 13, 5000)
        reduced = get_preset("blowup-p2-reduced")
        assert (reduced.N_x, reduced.N_y, reduced.N_t) == (2 ** 9, 2 ** 10, 2500)

    def test_critical_exponent(self):
        cfg = get_preset("critical-p43")
        assert cfg.params.p == Fraction(4, 3)
        assert cfg.initial[0].params["alpha"] == 4.0

    def test_zaitsev_domain_holds_whole_periods(self):
        assert zaitsev_ly(5) == pytest.approx(2.5, abs=1e-6)
        assert get_preset("zaitsev-reduced-small-ly").L_y == pytest.approx(1.5, abs=1e-6)

    def test_half_resolution_variants(self):
        full, half = get_preset("zaitsev-reduced"), get_preset("zaitsev-reduced-half")
        assert (half.N_x, half.N_y) == (full.N_x // 2, full.N_y // 2)
        assert half.preset == "zaitsev-reduced-half"
        assert "kp1-deformed-half" in PRESETS

    def test_overrides(self):
        cfg = get_preset("zaitsev-propagation", T=1.0, N_t=2000, snapshot_times=())
        assert (cfg.T, cfg.N_t, cfg.snapshot_times) == (1.0, 2000, ())

    def test_unknown_preset(self):
        with pytest.raises(ConfigurationError, match="Unknown preset: missing. Supported: soliton-propagation"):
            get_preset("missing")

    def test_bad_override(self):
        with pytest.raises(ConfigurationError, match="Invalid override"):
            get_preset("soliton-propagation", steps=3)
