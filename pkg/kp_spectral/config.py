"""Configuration for kp-spectral: process settings and experiment run files."""
import inspect
import logging
import os
import re
import tomllib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from dotenv import load_dotenv

from .diagnostics import DEFAULT_STOP_THRESHOLD
from .errors import ConfigurationError
from .integrator import STEPPERS
from .model import InitialTerm, KPParams, get_constructor, zaitsev_delta
from .spectral import SpectralGrid, make_grid

logger = logging.getLogger("kp_spectral.config")


# ============================================
# PART A: PROCESS SETTINGS
# ============================================

@dataclass
class Settings:
    """Process-level settings loaded from the environment."""

    # FFT threads (scipy.fft workers, -1 = all cores)
    workers: int = -1

    # Runs whose memory estimate exceeds this are refused
    memory_budget_mb: float = 4096.0

    # Parent directory of run outputs
    output_dir: str = "runs"

    # Cadence of fourier_decay / transverse_moment
    heavy_every: int = 10

    log_level: str = "INFO"


def _env_number(name: str, default: str, kind: type):
    raw = os.getenv(name, default)
    try:
        return kind(raw)
    except ValueError as e:
        raise ConfigurationError(f"{name} must be a {kind.__name__}, got {raw!r}") from e


def load_settings() -> Settings:
    """
    Load settings from environment variables.

    Returns:
        Initialized Settings object

    Raises:
        ConfigurationError: If a variable holds an invalid value
    """
    # Load .env file if present
    load_dotenv()

    settings = Settings()
    settings.workers = _env_number("KP_WORKERS", "-1", int)
    settings.memory_budget_mb = _env_number("KP_MEMORY_BUDGET_MB", "4096", float)
    settings.output_dir = os.getenv("KP_OUTPUT_DIR", "runs")
    settings.heavy_every = _env_number("KP_HEAVY_EVERY", "10", int)
    settings.log_level = os.getenv("LOG_LEVEL", "INFO").upper()

    if settings.workers == 0:
        raise ConfigurationError("KP_WORKERS must be nonzero (negative counts from the core count)")
    if settings.memory_budget_mb <= 0:
        raise ConfigurationError(f"KP_MEMORY_BUDGET_MB must be positive, got {settings.memory_budget_mb}")
    if settings.heavy_every < 1:
        raise ConfigurationError(f"KP_HEAVY_EVERY must be >= 1, got {settings.heavy_every}")
    if settings.log_level not in logging.getLevelNamesMapping():
        raise ConfigurationError(f"LOG_LEVEL is not a logging level: {settings.log_level}")

    return settings


# ============================================
# PART B: RUN CONFIGURATION
# ============================================

@dataclass(frozen=True)
class RunConfig:
    """
    One experiment: model, grid, time stepping, initial data and outputs.

    ``initial`` is an ordered list of constructor invocations whose outputs
    are summed and projected onto the zero-mass constraint.
    """
    params: KPParams
    L_x: float
    L_y: float
    N_x: int
    N_y: int
    T: float
    N_t: int
    initial: Tuple[InitialTerm, ...]
    snapshot_times: Tuple[float, ...] = ()
    cadence: int = 1
    heavy_every: int = 10
    stop_threshold: float = DEFAULT_STOP_THRESHOLD
    output_dir: Optional[Path] = None
    preset: Optional[str] = None
    stepper: str = "etdrk4"
    write_snapshots: bool = True

    def __post_init__(self):
        object.__setattr__(self, "initial", tuple(self.initial))
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))
        if self.output_dir is not None:
            object.__setattr__(self, "output_dir", Path(self.output_dir))
        # Grid checks live in make_grid
        make_grid(self.L_x, self.L_y, self.N_x, self.N_y)
        if not self.T > 0:
            raise ConfigurationError(f"T must be positive, got {self.T}")
        if isinstance(self.N_t, bool) or int(self.N_t) != self.N_t or self.N_t < 1:
            raise ConfigurationError(f"N_t must be a positive integer, got {self.N_t}")
        if not self.initial:
            raise ConfigurationError("Initial data needs at least one constructor")
        for t in self.snapshot_times:
            if not 0.0 <= t <= self.T:
                raise ConfigurationError(f"Snapshot time {t} lies outside [0, {self.T}]")
        if self.cadence < 1:
            raise ConfigurationError(f"cadence must be >= 1, got {self.cadence}")
        if self.heavy_every < 1:
            raise ConfigurationError(f"heavy_every must be >= 1, got {self.heavy_every}")
        if not self.stop_threshold > 0:
            raise ConfigurationError(f"Stop threshold must be positive, got {self.stop_threshold}")
        if self.stepper not in STEPPERS:
            raise ConfigurationError(
                f"Unknown stepper: {self.stepper}. Supported: {', '.join(STEPPERS.keys())}"
            )

    @property
    def grid(self) -> SpectralGrid:
        return make_grid(self.L_x, self.L_y, self.N_x, self.N_y)

    @property
    def dt(self) -> float:
        return self.T / self.N_t

    def memory_estimate_mb(self) -> float:
        """Rough peak working set: 24 complex arrays of the grid size (stages, weights, caches)."""
        return self.N_x * self.N_y * 16 * 24 / 2 ** 20

    def as_dict(self) -> Dict[str, Any]:
        """Plain-data echo of the configuration (used in summary.json)."""
        return {
            "preset": self.preset,
            "model": {
                "p": str(self.params.p),
                "epsilon": self.params.epsilon,
                "zero_mode_policy": self.params.zero_mode_policy.value,
                "shift": self.params.shift,
                "dealias": self.params.dealias,
            },
            "grid": {"Lx": self.L_x, "Ly": self.L_y, "Nx": self.N_x, "Ny": self.N_y},
            "time": {
                "T": self.T, "Nt": self.N_t, "cadence": self.cadence,
                "stepper": self.stepper, "stop_threshold": self.stop_threshold,
            },
            "initial": [
                {"name": term.name, "scale": term.scale, **dict(term.params)} for term in self.initial
            ],
            "output": {
                "dir": str(self.output_dir) if self.output_dir is not None else None,
                "snapshot_times": list(self.snapshot_times),
                "heavy_every": self.heavy_every,
                "write_snapshots": self.write_snapshots,
            },
        }


def apply_overrides(
    cfg: RunConfig,
    nx: Optional[int] = None,
    ny: Optional[int] = None,
    nt: Optional[int] = None,
    tmax: Optional[float] = None,
    lx: Optional[float] = None,
    ly: Optional[float] = None,
    out: Optional[Path] = None,
) -> RunConfig:
    """
    Command-line overrides on top of a loaded config.

    Shortening T drops snapshot times beyond the new final time.
    """
    changes: Dict[str, Any] = {}
    for name, value in (("N_x", nx), ("N_y", ny), ("N_t", nt), ("L_x", lx), ("L_y", ly), ("output_dir", out)):
        if value is not None:
            changes[name] = value
    if tmax is not None:
        changes["T"] = tmax
        kept = tuple(t for t in cfg.snapshot_times if t <= tmax)
        if len(kept) != len(cfg.snapshot_times):
            logger.warning(f"Dropping snapshot times beyond T={tmax}")
        changes["snapshot_times"] = kept
    if changes:
        logger.info(f"Config overrides: {changes}")
    return replace(cfg, **changes)


# ============================================
# PART C: TOML FILES
# ============================================

_SECTIONS: Dict[str, Tuple[str, ...]] = {
    "model": ("p", "epsilon", "zero_mode_policy", "shift", "dealias"),
    "grid": ("Lx", "Ly", "Nx", "Ny", "Ly_zaitsev_periods"),
    "time": ("T", "Nt", "cadence", "stepper", "stop_threshold"),
    "output": ("dir", "snapshot_times", "heavy_every", "write_snapshots"),
}
_REQUIRED = (("grid", "Lx"), ("grid", "Nx"), ("grid", "Ny"), ("time", "T"), ("time", "Nt"))
_HEADER = re.compile(r"^\s*\[\[?\s*([A-Za-z_][\w-]*)\s*\]\]?")


class _Source:
    """Raw TOML text with key -> line lookup for error messages."""

    def __init__(self, path: Path, text: str):
        self.path = path
        self.lines = text.splitlines()

    def line_of(self, section: Optional[str], key: str, occurrence: int = 0) -> Optional[int]:
        current: Optional[str] = None
        seen = -1
        key_re = re.compile(rf"^\s*[\"']?{re.escape(key)}[\"']?\s*=")
        for number, line in enumerate(self.lines, start=1):
            header = _HEADER.match(line)
            if header:
                current = header.group(1)
                if current == section and line.lstrip().startswith("[["):
                    seen += 1
                continue
            if current == section and key_re.match(line) and (section != "initial" or seen == occurrence):
                return number
        return None

    def error(self, message: str, section: Optional[str] = None, key: Optional[str] = None,
              occurrence: int = 0) -> ConfigurationError:
        line = self.line_of(section, key, occurrence) if key is not None else None
        where = f"{self.path}:{line}" if line is not None else str(self.path)
        return ConfigurationError(f"{where}: {message}")


def _initial_terms(source: _Source, entries: Any) -> List[InitialTerm]:
    if not isinstance(entries, list):
        raise source.error("[[initial]] must be an array of tables", None, "initial")
    terms = []
    for index, entry in enumerate(entries):
        if "name" not in entry:
            raise source.error(f"[[initial]] entry {index + 1} has no 'name'")
        entry = dict(entry)
        name = entry.pop("name")
        scale = float(entry.pop("scale", 1.0))
        try:
            constructor = get_constructor(name)
        except ConfigurationError as e:
            raise source.error(str(e), "initial", "name", index) from e
        accepted = set(inspect.signature(constructor).parameters) - {"grid"}
        for key in entry:
            if key not in accepted:
                raise source.error(
                    f"Unknown key '{key}' for constructor '{name}'. Supported: {', '.join(sorted(accepted))}",
                    "initial", key, index,
                )
        terms.append(InitialTerm(name, entry, scale))
    return terms


def _zaitsev_ly(source: _Source, periods: float, terms: Sequence[InitialTerm]) -> float:
    for term in terms:
        if term.name == "zaitsev":
            delta = zaitsev_delta(float(term.params["alpha"]), float(term.params["beta"]))
            if delta == 0:
                raise source.error("Ly_zaitsev_periods needs beta != 0", "grid", "Ly_zaitsev_periods")
            return periods / delta
    raise source.error("Ly_zaitsev_periods needs a zaitsev term in [[initial]]", "grid", "Ly_zaitsev_periods")


def load_config(path: Path) -> RunConfig:
    """
    Load a run configuration from a TOML file.

    A top-level ``preset`` key starts from that preset; the sections then
    override its values. Without a preset, [grid] Lx/Ly/Nx/Ny, [time] T/Nt
    and at least one [[initial]] entry are required.

    Raises:
        ConfigurationError: parse errors, unknown or missing keys, invalid values
        OSError: the file cannot be read
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    source = _Source(path, text)
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"{path}: {e}") from e

    for key in data:
        if key not in _SECTIONS and key not in ("preset", "initial"):
            raise source.error(f"Unknown key '{key}'", None, key)
    for section, allowed in _SECTIONS.items():
        table = data.get(section, {})
        if not isinstance(table, dict):
            raise source.error(f"'{section}' must be a table", None, section)
        for key in table:
            if key not in allowed:
                raise source.error(
                    f"Unknown key '{section}.{key}'. Supported: {', '.join(allowed)}", section, key
                )

    model: Mapping[str, Any] = data.get("model", {})
    grid: Mapping[str, Any] = data.get("grid", {})
    time: Mapping[str, Any] = data.get("time", {})
    output: Mapping[str, Any] = data.get("output", {})

    base: Optional[RunConfig] = None
    if "preset" in data:
        from .presets import get_preset
        try:
            base = get_preset(data["preset"])
        except ConfigurationError as e:
            raise source.error(str(e), None, "preset") from e
    else:
        for section, key in _REQUIRED:
            if key not in data.get(section, {}):
                raise source.error(f"Missing required key '{section}.{key}'")
        if "Ly" not in grid and "Ly_zaitsev_periods" not in grid:
            raise source.error("Missing required key 'grid.Ly' (or 'grid.Ly_zaitsev_periods')")
        if "initial" not in data:
            raise source.error("Missing required [[initial]] entries")

    terms = _initial_terms(source, data["initial"]) if "initial" in data else list(base.initial)

    def pick(table: Mapping[str, Any], key: str, current: Any) -> Any:
        return table[key] if key in table else current

    try:
        params_base = base.params if base is not None else KPParams()
        params = KPParams(
            p=pick(model, "p", params_base.p),
            epsilon=pick(model, "epsilon", params_base.epsilon),
            zero_mode_policy=pick(model, "zero_mode_policy", params_base.zero_mode_policy),
            shift=pick(model, "shift", params_base.shift),
            dealias=pick(model, "dealias", params_base.dealias),
        )
        L_y = pick(grid, "Ly", base.L_y if base is not None else None)
        if "Ly_zaitsev_periods" in grid:
            L_y = _zaitsev_ly(source, float(grid["Ly_zaitsev_periods"]), terms)
        settings_heavy = base.heavy_every if base is not None else load_settings().heavy_every
        cfg = RunConfig(
            params=params,
            L_x=float(pick(grid, "Lx", base.L_x if base is not None else None)),
            L_y=float(L_y),
            N_x=pick(grid, "Nx", base.N_x if base is not None else None),
            N_y=pick(grid, "Ny", base.N_y if base is not None else None),
            T=float(pick(time, "T", base.T if base is not None else None)),
            N_t=pick(time, "Nt", base.N_t if base is not None else None),
            initial=tuple(terms),
            snapshot_times=tuple(pick(output, "snapshot_times", base.snapshot_times if base is not None else ())),
            cadence=pick(time, "cadence", base.cadence if base is not None else 1),
            heavy_every=pick(output, "heavy_every", settings_heavy),
            stop_threshold=float(pick(time, "stop_threshold",
                                      base.stop_threshold if base is not None else DEFAULT_STOP_THRESHOLD)),
            output_dir=pick(output, "dir", base.output_dir if base is not None else None),
            preset=data.get("preset"),
            stepper=pick(time, "stepper", base.stepper if base is not None else "etdrk4"),
            write_snapshots=pick(output, "write_snapshots", base.write_snapshots if base is not None else True),
        )
    except ConfigurationError as e:
        if str(e).startswith(str(path)):
            raise
        raise ConfigurationError(f"{path}: {e}") from e
    except (TypeError, ValueError, KeyError) as e:
        raise ConfigurationError(f"{path}: invalid value: {e}") from e

    logger.info(f"Loaded config {path} ({cfg.params.name}, grid {cfg.N_x}x{cfg.N_y}, N_t={cfg.N_t})")
    return cfg
