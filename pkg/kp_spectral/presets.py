"""Named experiment catalog: every line-soliton, lump, Zaitsev and blow-up run."""
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Any, Callable, Dict, List, Tuple

import numpy as np

from .config import RunConfig
from .errors import ConfigurationError
from .model import InitialTerm, KPParams, zaitsev_delta

KP1 = KPParams(p=1, epsilon=-1)
KP2 = KPParams(p=1, epsilon=1)

# Zaitsev wave used throughout: alpha = 1, beta = 1/2
ZAITSEV_ALPHA = 1.0
ZAITSEV_BETA = 0.5


@dataclass(frozen=True)
class PresetEntry:
    description: str
    build: Callable[[], RunConfig]


PRESETS: Dict[str, PresetEntry] = {}


def preset(name: str, description: str):
    """Register a RunConfig factory under ``name``."""
    def register(build: Callable[[], RunConfig]) -> Callable[[], RunConfig]:
        PRESETS[name] = PresetEntry(description, build)
        return build
    return register


def _times(T: float, count: int = 4) -> Tuple[float, ...]:
    return tuple(float(t) for t in np.linspace(0.0, T, count + 1))


def _soliton(x0: float, amplitude: float = 12.0, c: float = 4.0) -> InitialTerm:
    return InitialTerm("a_sech2", {"amplitude": amplitude, "c": c, "x0": x0})


def _pert(x1: float, sign: int = 1) -> InitialTerm:
    return InitialTerm("perturbation_pair", {"x1": x1, "sign": sign})


def _zaitsev(x0: float, scale: float = 1.0) -> InitialTerm:
    return InitialTerm("zaitsev", {"alpha": ZAITSEV_ALPHA, "beta": ZAITSEV_BETA, "x0": x0}, scale)


def zaitsev_ly(periods: float) -> float:
    """L_y holding ``periods`` transverse periods of the preset Zaitsev wave."""
    return periods / zaitsev_delta(ZAITSEV_ALPHA, ZAITSEV_BETA)


# ============================================
# Line soliton propagation
# ============================================

def _soliton_run(params: KPParams, name: str) -> RunConfig:
    L = 8.0
    return RunConfig(
        params=params, L_x=L, L_y=L, N_x=2 ** 8, N_y=2 ** 10, T=6.0, N_t=3200,
        initial=(_soliton(-2 * L),), snapshot_times=_times(6.0), cadence=10, preset=name,
    )


@preset("soliton-propagation", "KP II line soliton 12 sech^2(x + 2 L_x), c = 4, t in [0, 6]")
def soliton_propagation() -> RunConfig:
    return _soliton_run(KP2, "soliton-propagation")


@preset("soliton-propagation-kp1", "KP I line soliton 12 sech^2(x + 2 L_x), c = 4, t in [0, 6]")
def soliton_propagation_kp1() -> RunConfig:
    return _soliton_run(KP1, "soliton-propagation-kp1")


# ============================================
# Perturbed line soliton, KP II
# ============================================

@preset("kp2-perturbed-offset", "KP II soliton minus a perturbation pair centered at x1 = x0/2")
def kp2_perturbed_offset() -> RunConfig:
    return replace(
        _soliton_run(KP2, "kp2-perturbed-offset"),
        initial=(_soliton(-16.0), _pert(-8.0, sign=-1)),
    )


@preset("kp2-perturbed-aligned", "KP II soliton plus a perturbation pair centered at x1 = x0")
def kp2_perturbed_aligned() -> RunConfig:
    return replace(
        _soliton_run(KP2, "kp2-perturbed-aligned"),
        initial=(_soliton(-16.0), _pert(-16.0)),
    )


@preset("kp2-perturbed-long", "kp2-perturbed-aligned continued to t = 16")
def kp2_perturbed_long() -> RunConfig:
    return replace(kp2_perturbed_aligned(), T=16.0, N_t=9600, snapshot_times=(0.0, 6.0, 16.0),
                   preset="kp2-perturbed-long")


@preset("kp2-deformed", "KP II deformed soliton 12 sech^2(x + 0.4 cos(2y/L_y))")
def kp2_deformed() -> RunConfig:
    return RunConfig(
        params=KP2, L_x=16.0, L_y=8.0, N_x=2 ** 10, N_y=2 ** 7, T=6.0, N_t=6400,
        initial=(InitialTerm("deformed_soliton"),), snapshot_times=_times(6.0), cadence=10,
        preset="kp2-deformed",
    )


# ============================================
# Perturbed line soliton, KP I
# ============================================

def _kp1_perturbed(name: str, x1: float, sign: int = 1, L_x: float = 8.0, **changes: Any) -> RunConfig:
    cfg = RunConfig(
        params=KP1, L_x=L_x, L_y=8.0, N_x=2 ** 9, N_y=2 ** 10, T=6.0, N_t=6400,
        initial=(_soliton(-2 * L_x), _pert(x1, sign)),
        snapshot_times=(0.0, 2.0, 4.0, 6.0), cadence=10, preset=name,
    )
    return replace(cfg, **changes)


@preset("kp1-perturbed-aligned", "KP I soliton plus a perturbation pair at x1 = x0; lumps emerge")
def kp1_perturbed_aligned() -> RunConfig:
    return _kp1_perturbed("kp1-perturbed-aligned", -16.0)


@preset("kp1-perturbed-flipped", "kp1-perturbed-aligned with the perturbation sign reversed")
def kp1_perturbed_flipped() -> RunConfig:
    return _kp1_perturbed("kp1-perturbed-flipped", -16.0, sign=-1)


@preset("kp1-perturbed-offset", "KP I soliton plus a perturbation pair at x1 = x0/2; meta-stable to t = 6")
def kp1_perturbed_offset() -> RunConfig:
    return _kp1_perturbed("kp1-perturbed-offset", -8.0)


@preset("kp1-perturbed-offset-long", "kp1-perturbed-offset continued to t = 12; lumps after t = 6")
def kp1_perturbed_offset_long() -> RunConfig:
    return _kp1_perturbed("kp1-perturbed-offset-long", -8.0, T=12.0, N_t=12800,
                          snapshot_times=(0.0, 4.0, 6.0, 8.0, 10.0, 12.0))


@preset("kp1-perturbed-offset-lx10", "kp1-perturbed-offset-long on the wider L_x = 10 domain")
def kp1_perturbed_offset_lx10() -> RunConfig:
    return _kp1_perturbed("kp1-perturbed-offset-lx10", -10.0, L_x=10.0, T=12.0, N_t=12800,
                          snapshot_times=(0.0, 4.0, 6.0, 8.0, 10.0, 12.0))


@preset("kp1-deformed", "KP I deformed soliton; a chain of lumps forms")
def kp1_deformed() -> RunConfig:
    return RunConfig(
        params=KP1, L_x=16.0, L_y=8.0, N_x=2 ** 11, N_y=2 ** 11, T=6.0, N_t=10000,
        initial=(InitialTerm("deformed_soliton"),), snapshot_times=_times(6.0), cadence=20,
        stop_threshold=1e-2, preset="kp1-deformed",
    )


# ============================================
# Zaitsev wave
# ============================================

def _zaitsev_run(name: str, *terms: InitialTerm, **changes: Any) -> RunConfig:
    cfg = RunConfig(
        params=KP1, L_x=10.0, L_y=zaitsev_ly(5), N_x=2 ** 9, N_y=2 ** 8, T=6.0, N_t=10000,
        initial=terms, snapshot_times=(0.0, 1.0, 2.0, 4.0, 6.0), cadence=10, preset=name,
    )
    return replace(cfg, **changes)


@preset("kp1-soliton-zaitsev", "KP I soliton plus 0.1 Zaitsev wave; oscillation before lumps form")
def kp1_soliton_zaitsev() -> RunConfig:
    return _zaitsev_run(
        "kp1-soliton-zaitsev", _soliton(-10.0), _zaitsev(-10.0, scale=0.1),
        T=8.0, N_t=8000, snapshot_times=(0.0, 2.0, 4.0, 6.0, 8.0), stop_threshold=1e-1,
    )


@preset("zaitsev-propagation", "Unperturbed Zaitsev wave (alpha = 1, beta = 0.5) centered at -L_x/2")
def zaitsev_propagation() -> RunConfig:
    return _zaitsev_run("zaitsev-propagation", _zaitsev(-5.0))


@preset("zaitsev-perturbed", "Zaitsev wave plus 6 (x + L_x/2) exp(-(x + L_x/2)^2 - y^2)")
def zaitsev_perturbed() -> RunConfig:
    return _zaitsev_run(
        "zaitsev-perturbed", _zaitsev(-5.0),
        InitialTerm("gaussian_dx", {"x1": -5.0, "y1": 0.0, "amplitude": 6.0}),
    )


@preset("zaitsev-perturbed-flipped", "zaitsev-perturbed with the perturbation sign reversed")
def zaitsev_perturbed_flipped() -> RunConfig:
    return _zaitsev_run(
        "zaitsev-perturbed-flipped", _zaitsev(-5.0),
        InitialTerm("gaussian_dx", {"x1": -5.0, "y1": 0.0, "amplitude": -6.0}),
    )


@preset("zaitsev-displaced", "Zaitsev wave plus a perturbation 6 x exp(-x^2 - y^2) away from it")
def zaitsev_displaced() -> RunConfig:
    return _zaitsev_run(
        "zaitsev-displaced", _zaitsev(-5.0),
        InitialTerm("gaussian_dx", {"x1": 0.0, "y1": 0.0, "amplitude": 6.0}),
    )


@preset("zaitsev-amplified", "1.1 times the Zaitsev wave; each hump becomes a lump")
def zaitsev_amplified() -> RunConfig:
    return _zaitsev_run("zaitsev-amplified", _zaitsev(-5.0, scale=1.1))


@preset("zaitsev-reduced", "0.9 times the Zaitsev wave on L_x = 30; long oscillatory phase")
def zaitsev_reduced() -> RunConfig:
    return _zaitsev_run(
        "zaitsev-reduced", _zaitsev(-15.0, scale=0.9),
        L_x=30.0, N_x=2 ** 11, N_y=2 ** 9, T=20.0, N_t=20000, cadence=20,
        snapshot_times=(0.0, 5.0, 10.0, 15.0, 20.0),
    )


@preset("zaitsev-reduced-small-ly", "zaitsev-reduced with L_y = 1.5 (three periods)")
def zaitsev_reduced_small_ly() -> RunConfig:
    return _zaitsev_run(
        "zaitsev-reduced-small-ly", _zaitsev(-15.0, scale=0.9),
        L_x=30.0, L_y=zaitsev_ly(3), N_x=2 ** 11, N_y=2 ** 8, T=20.0, N_t=20000, cadence=20,
        snapshot_times=(0.0, 5.0, 10.0, 15.0, 20.0),
    )


# ============================================
# Generalized KP: blow-up and regularity
# ============================================

def _gkp_run(name: str, params: KPParams, alpha: float, amplitude: float, T: float, **changes: Any) -> RunConfig:
    cfg = RunConfig(
        params=params, L_x=5.0, L_y=2.0, N_x=2 ** 10, N_y=2 ** 8, T=T, N_t=1000,
        initial=(InitialTerm("gaussian_dxx", {"alpha": alpha, "amplitude": amplitude}),),
        snapshot_times=_times(T), cadence=1, preset=name,
    )
    return replace(cfg, **changes)


@preset("blowup-p2", "Supercritical p = 2 KP I from 6 dxx exp(-(x^2 + y^2)); blows up near t = 0.0473")
def blowup_p2() -> RunConfig:
    return _gkp_run("blowup-p2", KPParams(p=2, epsilon=-1), 1.0, 6.0, 0.06,
                    N_x=2 ** 11, N_y=2 ** 13, N_t=5000, cadence=5)


@preset("blowup-p2-reduced", "blowup-p2 at N_x = 2^9, N_y = 2^10, N_t = 2500")
def blowup_p2_reduced() -> RunConfig:
    return _gkp_run("blowup-p2-reduced", KPParams(p=2, epsilon=-1), 1.0, 6.0, 0.06,
                    N_x=2 ** 9, N_y=2 ** 10, N_t=2500)


@preset("blowup-p2-kp2", "Same data under generalized KP II (p = 2); no blow-up")
def blowup_p2_kp2() -> RunConfig:
    return _gkp_run("blowup-p2-kp2", KPParams(p=2, epsilon=1), 1.0, 6.0, 0.1,
                    N_x=2 ** 9, N_y=2 ** 10, N_t=5000, cadence=5)


@preset("subcritical-p1", "KP I (p = 1) from 12 dxx exp(-(x^2 + y^2)); regular to t = 0.15")
def subcritical_p1() -> RunConfig:
    return _gkp_run("subcritical-p1", KP1, 1.0, 12.0, 0.15)


@preset("critical-p43", "Critical p = 4/3 KP I from 6 dxx exp(-4(x^2 + y^2)) to t = 0.05")
def critical_p43() -> RunConfig:
    return _gkp_run("critical-p43", KPParams(p=Fraction(4, 3), epsilon=-1), 4.0, 6.0, 0.05)


# ============================================
# Half-resolution variants of the long runs
# ============================================

def _half(name: str, build: Callable[[], RunConfig]) -> None:
    def halved() -> RunConfig:
        cfg = build()
        return replace(cfg, N_x=cfg.N_x // 2, N_y=cfg.N_y // 2, preset=name)
    PRESETS[name] = PresetEntry(f"{PRESETS[build.__name__.replace('_', '-')].description} (half resolution)",
                                halved)


for _build in (kp1_deformed, kp1_perturbed_offset_long, kp1_perturbed_offset_lx10,
               zaitsev_amplified, zaitsev_reduced, zaitsev_reduced_small_ly):
    _half(f"{_build.__name__.replace('_', '-')}-half", _build)


# ============================================
# Lookup
# ============================================

def list_presets() -> List[Tuple[str, str]]:
    """(name, description) for every preset, in catalog order."""
    return [(name, entry.description) for name, entry in PRESETS.items()]


def get_preset(name: str, **overrides: Any) -> RunConfig:
    """
    Build a preset, optionally replacing RunConfig fields.

    Raises:
        ConfigurationError: unknown preset or invalid override
    """
    if name not in PRESETS:
        raise ConfigurationError(f"Unknown preset: {name}. Supported: {', '.join(PRESETS.keys())}")
    cfg = PRESETS[name].build()
    if overrides:
        try:
            cfg = replace(cfg, **overrides)
        except TypeError as e:
            raise ConfigurationError(f"Invalid override for preset '{name}': {e}") from e
    return cfg
