"""Conserved quantities, norms, resolution and blow-up indicators, lump fitting."""
import logging
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import TYPE_CHECKING, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy.ndimage import maximum_filter

from .errors import ConfigurationError, FitError, UndefinedDeltaError
from .model import KPParams, SolitaryWaveSpec, WaveKind, periodic_offset, inverse_dx, lump, sign_power
from .spectral import Field, inverse, to_physical

if TYPE_CHECKING:
    from .integrator import StepState

logger = logging.getLogger("kp_spectral.diagnostics")

DEFAULT_STOP_THRESHOLD = 1e-4
RESOLUTION_THRESHOLD = 1e-5
DEFAULT_PEAK_THRESHOLD = 0.3


class StopKind(str, Enum):
    DELTA_EXCEEDED = "delta_exceeded"
    NONFINITE = "nonfinite"


@dataclass(frozen=True)
class StopReason:
    kind: StopKind
    t_stop: float


@dataclass(frozen=True)
class DiagnosticsRecord:
    """
    Diagnostics of one state.

    ``I_transverse`` and ``fourier_decay`` are None on calls where the
    costly quantities were skipped.
    """
    t: float
    mass: float
    delta: float
    linf: float
    l2_uy: float
    energy: float
    I_transverse: Optional[float] = None
    fourier_decay: Optional[float] = None
    stop: Optional[StopReason] = None

    @property
    def resolved(self) -> Optional[bool]:
        return None if self.fourier_decay is None else is_resolved(self.fourier_decay)

    def as_row(self) -> Dict[str, Optional[float]]:
        row = asdict(self)
        row.pop("stop")
        return row


@dataclass(frozen=True)
class PeakFit:
    x_peak: float
    y_peak: float
    height: float
    c_fit: float
    residual_linf: float


class Peak(NamedTuple):
    x: float
    y: float
    height: float


# ============================================
# Scalar diagnostics
# ============================================

def mass(f: Field) -> float:
    """Discrete L2 norm squared, sum u^2 times the cell area."""
    u = f.values()
    return float(np.sum(u * u) * f.grid.cell_area)


def delta(M0: float, Mt: float) -> float:
    """
    Relative mass conservation |1 - M(t)/M(0)|.

    Raises:
        UndefinedDeltaError: M0 == 0
    """
    if M0 == 0:
        raise UndefinedDeltaError("Relative mass conservation is undefined for zero initial mass")
    return abs(1.0 - Mt / M0)


def energy(f: Field, params: KPParams) -> float:
    """
    E = int 1/2 u_x^2 - 1/2 eps (dx^{-1} u_y)^2 - pow(u, p+2) / ((p+1)(p+2)).

    The quadratic terms are summed in spectral space; dx^{-1} follows the
    model's zero-mode policy.
    """
    grid = f.grid
    u_hat = f.coefficients()
    w = grid.spectral_weight
    ux2 = np.sum(np.abs(grid.derivative(1, 0) * u_hat) ** 2) * w
    v2 = np.sum(np.abs(inverse_dx(grid, params) * grid.derivative(0, 1) * u_hat) ** 2) * w
    p = params.p
    potential = np.sum(sign_power(f.values(), p + 2)) * grid.cell_area / float((p + 1) * (p + 2))
    return float(0.5 * ux2 - 0.5 * params.epsilon * v2 - potential)


def norms(f: Field) -> Tuple[float, float]:
    """(max |u|, ||u_y||_2) with the y-derivative taken spectrally."""
    grid = f.grid
    linf = float(np.max(np.abs(f.values())))
    uy2 = np.sum(np.abs(grid.derivative(0, 1) * f.coefficients()) ** 2) * grid.spectral_weight
    return linf, float(np.sqrt(uy2))


def transverse_moment(f: Field) -> float:
    """I = int y^2 u^2."""
    u = f.values()
    y = f.grid.y_nodes[None, :]
    return float(np.sum(y * y * u * u) * f.grid.cell_area)


def fourier_decay(f: Field) -> float:
    """Largest |u_hat| in the outer band over the largest |u_hat| overall; 0 for a zero field."""
    a = np.abs(f.coefficients())
    top = a.max()
    if top == 0:
        return 0.0
    return float(a[f.grid.outer_band()].max() / top)


def is_resolved(decay: float) -> bool:
    """Five orders of magnitude of spectral decay."""
    return decay <= RESOLUTION_THRESHOLD


def gradient_ratio(f: Field) -> float:
    """max |u_y| / max |u_x|, the anisotropy indicator near blow-up."""
    grid = f.grid
    u_hat = f.coefficients()
    ux = np.max(np.abs(inverse(grid.derivative(1, 0) * u_hat)))
    uy = np.max(np.abs(inverse(grid.derivative(0, 1) * u_hat)))
    if ux == 0:
        return float("inf") if uy > 0 else 0.0
    return float(uy / ux)


def detect_stop(rec: DiagnosticsRecord, threshold: float = DEFAULT_STOP_THRESHOLD) -> Optional[StopReason]:
    """
    Stop verdict for one record: ``nonfinite`` beats ``delta_exceeded``.

    Raises:
        ConfigurationError: threshold <= 0
    """
    if not threshold > 0:
        raise ConfigurationError(f"Stop threshold must be positive, got {threshold}")
    tracked = [rec.mass, rec.delta, rec.linf, rec.l2_uy, rec.energy, rec.I_transverse, rec.fourier_decay]
    if any(v is not None and not np.isfinite(v) for v in tracked):
        return StopReason(StopKind.NONFINITE, rec.t)
    if rec.delta > threshold:
        return StopReason(StopKind.DELTA_EXCEEDED, rec.t)
    return None


class DiagnosticsMonitor:
    """
    ``integrate`` callback producing one DiagnosticsRecord per call.

    Scalar norms are computed on every call, fourier_decay and
    transverse_moment on every ``heavy_every``-th call.
    """

    def __init__(self, params: KPParams, threshold: float = DEFAULT_STOP_THRESHOLD, heavy_every: int = 10):
        if heavy_every < 1:
            raise ConfigurationError(f"heavy_every must be >= 1, got {heavy_every}")
        self.params = params
        self.threshold = threshold
        self.heavy_every = heavy_every
        self.initial_mass: Optional[float] = None
        self.calls = 0

    def __call__(self, state: "StepState") -> DiagnosticsRecord:
        f = to_physical(state.u_hat)
        with np.errstate(over="ignore", invalid="ignore"):
            m = mass(f)
            if self.initial_mass is None:
                self.initial_mass = m
            linf, l2_uy = norms(f)
            e = energy(f, self.params)
            heavy = self.calls % self.heavy_every == 0
            record = DiagnosticsRecord(
                t=state.t,
                mass=m,
                delta=delta(self.initial_mass, m),
                linf=linf,
                l2_uy=l2_uy,
                energy=e,
                I_transverse=transverse_moment(f) if heavy else None,
                fourier_decay=fourier_decay(f) if heavy else None,
            )
        self.calls += 1
        stop = detect_stop(record, self.threshold)
        if stop is not None:
            record = replace(record, stop=stop)
        logger.debug(f"t={record.t:.6g} delta={record.delta:.3e} linf={record.linf:.6g}")
        return record


# ============================================
# Peaks and lump fits
# ============================================

_NEIGHBOURS = np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]], dtype=bool)


def find_peaks(f: Field, rel_threshold: float = DEFAULT_PEAK_THRESHOLD) -> List[Peak]:
    """
    Strict local maxima over the periodic 8-neighbour stencil, highest first,
    ties by (x, y) ascending.

    A peak must rise at least rel_threshold of the field's range above the
    field's minimum, so adding a constant never changes the locations.
    """
    if not 0 < rel_threshold <= 1:
        raise ConfigurationError(f"rel_threshold must lie in (0, 1], got {rel_threshold}")
    u = f.values()
    floor = u.min()
    neighbour_max = maximum_filter(u, footprint=_NEIGHBOURS, mode="wrap")
    selected = (u > neighbour_max) & (u - floor >= rel_threshold * (u.max() - floor))
    grid = f.grid
    peaks = [
        Peak(float(grid.x_nodes[i]), float(grid.y_nodes[j]), float(u[i, j]))
        for i, j in np.argwhere(selected)
    ]
    return sorted(peaks, key=lambda p: (-p.height, p.x, p.y))


def _window(f: Field, x0: float, y0: float, radius: float) -> np.ndarray:
    X, Y = f.grid.mesh()
    dx = periodic_offset(X - x0, 2.0 * np.pi * f.grid.L_x)
    dy = periodic_offset(Y - y0, 2.0 * np.pi * f.grid.L_y)
    return dx ** 2 + dy ** 2 <= radius ** 2


def fit_lump(f: Field, peak: Peak) -> PeakFit:
    """
    Lump with the peak's height and location: c = height / 8.

    The residual is max |f - lump| within radius 3/sqrt(c) of the peak.

    Raises:
        FitError: nonpositive peak height
    """
    x0, y0, height = peak
    if not height > 0:
        raise FitError(f"Cannot fit a lump to a peak of height {height}")
    wave = SolitaryWaveSpec(WaveKind.LUMP, c=height / 8.0, x0=x0, y0=y0)
    fitted = lump(f.grid, wave.c, x0, y0, check_tails=False).values()
    window = _window(f, x0, y0, 3.0 / np.sqrt(wave.c))
    residual = float(np.max(np.abs(f.values() - fitted)[window]))
    return PeakFit(x0, y0, height, wave.c, residual)


def fit_lumps(
    f: Field, rel_threshold: float = DEFAULT_PEAK_THRESHOLD, count: Optional[int] = None
) -> Tuple[List[PeakFit], Field]:
    """
    Fit a lump to each of the highest ``count`` peaks and subtract them all.

    Every fit uses only its own peak; the lumps are not adjusted jointly.
    """
    peaks = find_peaks(f, rel_threshold)
    if count is not None:
        peaks = peaks[:count]
    residual = f.values().copy()
    fits = []
    for peak in peaks:
        fits.append(fit_lump(f, peak))
        residual -= lump(f.grid, peak.height / 8.0, peak.x, peak.y, check_tails=False).values()
    logger.info(f"Fitted {len(fits)} lump(s); max residual {np.max(np.abs(residual)):.3e}")
    return fits, Field.from_physical(f.grid, residual)
