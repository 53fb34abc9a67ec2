"""Generalized KP model in Fourier form, exact solutions and initial data.

The evolution equation is

    u_t + u_xxx + eps * dx^{-1} u_yy + u^p u_x = 0,

written in Fourier space as u_hat_t = L u_hat + N(u_hat) with

    L(xi) = i xi1^3 - eps * i xi2^2 / xi1
    N(u_hat) = -(i xi1 / (p + 1)) * F[u^(p+1)].
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Any, Callable, Dict, Mapping, Protocol, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigurationError, NumericalOverflowError
from .spectral import Field, SpectralGrid, forward, inverse, make_grid

logger = logging.getLogger("kp_spectral.model")

MAX_SHIFT = 1e-12


class ZeroModePolicy(str, Enum):
    """Treatment of the singular xi1 = 0 column of dx^{-1}."""
    PROJECT = "project"
    TINY_SHIFT = "tiny_shift"


def as_exponent(p: Union[int, float, str, Fraction]) -> Fraction:
    """Parse p given as int, float, Fraction or a string such as '4/3'."""
    try:
        if isinstance(p, float):
            return Fraction(str(p))
        return Fraction(p)
    except (ValueError, TypeError, ZeroDivisionError) as e:
        raise ConfigurationError(f"Cannot read nonlinearity exponent p={p!r}: {e}") from e


@dataclass(frozen=True)
class KPParams:
    """
    Model parameters.

    Attributes:
        p: nonlinearity exponent m/n with n odd
        epsilon: -1 for KP I, +1 for KP II
        zero_mode_policy: projection of the xi1 = 0 column or the tiny imaginary shift
        shift: size of the imaginary shift used by TINY_SHIFT
        dealias: apply the 2/3 rule around the pointwise power
    """
    p: Fraction = Fraction(1)
    epsilon: int = 1
    zero_mode_policy: ZeroModePolicy = ZeroModePolicy.PROJECT
    shift: float = 1e-16
    dealias: bool = False

    def __post_init__(self):
        p = as_exponent(self.p)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "zero_mode_policy", ZeroModePolicy(self.zero_mode_policy))
        if p <= 0:
            raise ConfigurationError(f"p must be positive, got {p}")
        if p.denominator % 2 == 0:
            raise ConfigurationError(f"p must have an odd denominator, got {p}")
        if self.epsilon not in (-1, 1):
            raise ConfigurationError(f"epsilon must be -1 (KP I) or +1 (KP II), got {self.epsilon}")
        if self.zero_mode_policy is ZeroModePolicy.TINY_SHIFT and not 0 < self.shift <= MAX_SHIFT:
            raise ConfigurationError(f"tiny_shift requires 0 < shift <= {MAX_SHIFT}, got {self.shift}")

    @property
    def name(self) -> str:
        kind = "KP I" if self.epsilon == -1 else "KP II"
        return kind if self.p == 1 else f"{kind} (p={self.p})"


def sign_power(u: np.ndarray, exponent: Fraction) -> np.ndarray:
    """
    Real power preserving odd symmetry: sign(u)^a |u|^(a/b) for exponent a/b, b odd.

    Integer exponents use the ordinary power.
    """
    exponent = Fraction(exponent)
    a, b = exponent.numerator, exponent.denominator
    if b == 1:
        return u ** a
    magnitude = np.abs(u) ** (a / b)
    if a % 2 == 1:
        return np.sign(u) * magnitude
    return magnitude


# ============================================
# Fourier-space operators
# ============================================

def _zero_column(grid: SpectralGrid) -> np.ndarray:
    return grid.xi1 == 0


def linear_symbol(grid: SpectralGrid, params: KPParams) -> np.ndarray:
    """
    L(xi) = i xi1^3 - eps i xi2^2 / xi1 on every mode.

    PROJECT sets the xi1 = 0 column to zero. TINY_SHIFT replaces xi1 by
    xi1 + i eps delta, which turns the singular column into a large negative
    real number for both signs of eps. The x Nyquist column is zero.
    """
    xi1, xi2 = grid.wavenumbers()
    L = np.zeros(grid.shape, dtype=np.complex128)
    L += 1j * xi1 ** 3
    zero = _zero_column(grid)
    if params.zero_mode_policy is ZeroModePolicy.PROJECT:
        safe = np.where(zero, 1.0, grid.xi1)[:, None]
        L -= params.epsilon * 1j * xi2 ** 2 / safe
        L[zero, :] = 0.0
    else:
        shifted = xi1 + 1j * params.epsilon * params.shift
        L -= params.epsilon * 1j * xi2 ** 2 / shifted
    L[grid.nyquist_x(), :] = 0.0
    return L


def inverse_dx(grid: SpectralGrid, params: KPParams) -> np.ndarray:
    """Multiplier of dx^{-1} = -i / xi1 under the same zero-mode policy as ``linear_symbol``."""
    zero = _zero_column(grid)
    if params.zero_mode_policy is ZeroModePolicy.PROJECT:
        m = -1j / np.where(zero, 1.0, grid.xi1)
        m = np.where(zero, 0.0, m)
    else:
        m = -1j / (grid.xi1 + 1j * params.epsilon * params.shift)
    m = np.where(grid.nyquist_x(), 0.0, m)
    return np.broadcast_to(m[:, None], grid.shape).astype(np.complex128)


@lru_cache(maxsize=16)
def _nonlinear_operators(grid: SpectralGrid, params: KPParams) -> Tuple[np.ndarray, np.ndarray]:
    factor = -grid.derivative(1, 0) / float(params.p + 1)
    mask = grid.dealias_mask() if params.dealias else np.ones(grid.shape, dtype=bool)
    return factor, mask


def nonlinear_hat(u_hat: np.ndarray, grid: SpectralGrid, params: KPParams) -> np.ndarray:
    """Array form of ``nonlinear_rhs`` used inside the stepper."""
    factor, mask = _nonlinear_operators(grid, params)
    if params.dealias:
        u_hat = u_hat * mask
    with np.errstate(over="ignore", invalid="ignore"):
        w = sign_power(inverse(u_hat), params.p + 1)
    if not np.all(np.isfinite(w)):
        raise NumericalOverflowError("Non-finite values in the nonlinear term")
    w_hat = forward(w)
    if params.dealias:
        w_hat *= mask
    return factor * w_hat


def nonlinear_rhs(f: Field, params: KPParams) -> Field:
    """N(u_hat) = -(i xi1/(p+1)) F[pow(u, p+1)] as a spectral field."""
    return Field.from_spectral(f.grid, nonlinear_hat(f.coefficients(), f.grid, params))


def project_constraint(f: Field) -> Field:
    """Zero every xi1 = 0 mode (the zero-mass constraint); idempotent."""
    coeffs = f.coefficients().copy()
    coeffs[_zero_column(f.grid), :] = 0.0
    return Field.from_spectral(f.grid, coeffs)


def linear_propagate(f: Field, t: float, params: KPParams) -> Field:
    """Exact solution of the linear KP equation: u_hat(t) = u_hat(0) exp(t L)."""
    coeffs = f.coefficients()
    with np.errstate(over="ignore", invalid="ignore"):
        propagated = coeffs * np.exp(t * linear_symbol(f.grid, params))
    return Field.from_spectral(f.grid, np.where(coeffs == 0, 0.0, propagated))


# ============================================
# Exact solutions and initial data
# ============================================

def periodic_offset(d: np.ndarray, period: float) -> np.ndarray:
    """Nearest periodic image of an offset."""
    return (d + 0.5 * period) % period - 0.5 * period


def _sech(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return 2.0 * e / (1.0 + e * e)


def a_sech2(grid: SpectralGrid, amplitude: float, c: float, x0: float = 0.0) -> Field:
    """u = A sech^2(sqrt(c) (x - x0) / 2), constant in y."""
    if c <= 0:
        raise ConfigurationError(f"Soliton speed c must be positive, got {c}")
    X, _ = grid.mesh()
    d = periodic_offset(X - x0, 2.0 * np.pi * grid.L_x)
    return Field.from_physical(grid, amplitude * _sech(np.sqrt(c) * d / 2.0) ** 2)


def kdv_soliton(grid: SpectralGrid, c: float, x0: float = 0.0) -> Field:
    """KdV 1-soliton in the (3c/2) sech^2 normalization."""
    return a_sech2(grid, 1.5 * c, c, x0)


def lump(
    grid: SpectralGrid, c: float, x0: float = 0.0, y0: float = 0.0, *, check_tails: bool = True
) -> Field:
    """
    KP I lump of speed c centered at (x0, y0); peak value 8c.

    Logs a warning when the algebraic tails exceed 1e-2 of the peak on the
    domain boundary.
    """
    if c <= 0:
        raise ConfigurationError(f"Lump speed c must be positive, got {c}")
    X, Y = grid.mesh()
    dx = periodic_offset(X - x0, 2.0 * np.pi * grid.L_x)
    dy = periodic_offset(Y - y0, 2.0 * np.pi * grid.L_y)
    a = c / 3.0 * dx ** 2
    b = c ** 2 / 3.0 * dy ** 2
    values = 8.0 * c * (1.0 - a + b) / (1.0 + a + b) ** 2
    edge = max(np.abs(values[0, :]).max(), np.abs(values[:, 0]).max())
    if check_tails and edge > 1e-2 * 8.0 * c:
        logger.warning(f"Lump tails reach {edge / (8.0 * c):.2e} of the peak on the boundary; enlarge L_x, L_y")
    return Field.from_physical(grid, values)


def zaitsev_speed(alpha: float, beta: float) -> float:
    """c = alpha^2 (4 - beta^2) / (1 - beta^2)."""
    return alpha ** 2 * (4.0 - beta ** 2) / (1.0 - beta ** 2)


def _check_zaitsev(alpha: float, beta: float) -> None:
    if alpha <= 0:
        raise ConfigurationError(f"Zaitsev alpha must be positive, got {alpha}")
    if not -1.0 < beta < 1.0:
        raise ConfigurationError(f"Zaitsev beta must lie in (-1, 1), got {beta}")


def _zaitsev_values(grid: SpectralGrid, alpha: float, beta: float, delta: float, x0: float) -> np.ndarray:
    X, Y = grid.mesh()
    s = _sech(alpha * periodic_offset(X - x0, 2.0 * np.pi * grid.L_x))
    q = beta * s * np.cos(delta * Y)
    # (1 - b cosh cos) / (cosh - b cos)^2 with numerator and denominator divided by cosh^2
    return 12.0 * alpha ** 2 * (s * s - q) / (1.0 - q) ** 2


def zaitsev_delta(alpha: float, beta: float) -> float:
    """
    Transverse wavenumber of the Zaitsev wave: delta^2 = 3 alpha^4 / (1 - beta^2).

    Writing the wave as u = 12 (log f)_xx with f = cosh(alpha (x - c t)) - beta cos(delta y)
    and requiring the bilinear form of KP I to vanish gives both this relation
    and the speed c = alpha^2 (4 - beta^2) / (1 - beta^2). ``fit_zaitsev_delta``
    recovers the same value from the travelling-wave residual.
    """
    _check_zaitsev(alpha, beta)
    if beta == 0:
        return 0.0
    return float(np.sqrt(3.0 / (1.0 - beta ** 2))) * alpha ** 2


@lru_cache(maxsize=32)
def fit_zaitsev_delta(alpha: float, beta: float) -> float:
    """
    Transverse wavenumber found numerically.

    Minimizes the relative travelling-wave residual of KP I (p = 1) over
    s = delta^2 on a grid holding exactly one y period, so node positions in
    delta*y do not move with the trial value.
    """
    _check_zaitsev(alpha, beta)
    if beta == 0:
        return 0.0
    params = KPParams(p=1, epsilon=-1)
    c = zaitsev_speed(alpha, beta)
    scale = alpha ** 4 / (1.0 - beta ** 2)

    def objective(s: float) -> float:
        delta = float(np.sqrt(s))
        grid = make_grid(10.0 / alpha, 1.0 / delta, 1024, 64)
        psi = Field.from_physical(grid, _zaitsev_values(grid, alpha, beta, delta, 0.0))
        return (sw_residual(psi, c, params) / l2_norm(psi)) ** 2

    result = minimize_scalar(
        objective,
        bounds=(1e-3 * scale, 50.0 * scale),
        method="bounded",
        options={"xatol": 1e-13 * scale, "maxiter": 500},
    )
    delta = float(np.sqrt(result.x))
    logger.info(
        f"Fitted Zaitsev delta(alpha={alpha}, beta={beta}) = {delta:.12f} "
        f"(relative residual {np.sqrt(result.fun):.2e}, {result.nfev} evaluations)"
    )
    return delta


def zaitsev(grid: SpectralGrid, alpha: float, beta: float, x0: float = 0.0) -> Tuple[Field, float]:
    """
    Zaitsev wave localized in x and periodic in y, and its speed c.

    Raises:
        ConfigurationError: alpha <= 0 or |beta| >= 1
    """
    _check_zaitsev(alpha, beta)
    delta = zaitsev_delta(alpha, beta)
    if delta > 0:
        periods = grid.L_y * delta
        if abs(periods - round(periods)) > 1e-8:
            logger.warning(
                f"L_y * delta = {periods:.6f} is not an integer; the Zaitsev wave is not periodic on this grid"
            )
    values = _zaitsev_values(grid, alpha, beta, delta, x0)
    return Field.from_physical(grid, values), zaitsev_speed(alpha, beta)


def perturbation_pair(grid: SpectralGrid, x1: float, sign: int = 1) -> Field:
    """Two Gaussian x-derivative bumps at y = +-pi L_y / 2, both centered at x1."""
    X, Y = grid.mesh()
    d = X - x1
    half = grid.L_y * np.pi / 2.0
    values = sign * 6.0 * d * np.exp(-d ** 2) * (np.exp(-(Y + half) ** 2) + np.exp(-(Y - half) ** 2))
    return Field.from_physical(grid, values)


def gaussian_dx(grid: SpectralGrid, x1: float = 0.0, y1: float = 0.0, amplitude: float = 6.0) -> Field:
    """A (x - x1) exp(-(x - x1)^2 - (y - y1)^2)."""
    X, Y = grid.mesh()
    d = X - x1
    return Field.from_physical(grid, amplitude * d * np.exp(-d ** 2 - (Y - y1) ** 2))


def gaussian_dxx(grid: SpectralGrid, alpha: float, amplitude: float = 6.0) -> Field:
    """amplitude * dxx exp(-alpha (x^2 + y^2)), evaluated analytically."""
    if alpha <= 0:
        raise ConfigurationError(f"alpha must be positive, got {alpha}")
    X, Y = grid.mesh()
    values = amplitude * (4.0 * alpha ** 2 * X ** 2 - 2.0 * alpha) * np.exp(-alpha * (X ** 2 + Y ** 2))
    return Field.from_physical(grid, values)


def deformed_soliton(grid: SpectralGrid, amplitude: float = 12.0, bend: float = 0.4) -> Field:
    """12 sech^2(x + 0.4 cos(2 y / L_y))."""
    X, Y = grid.mesh()
    return Field.from_physical(grid, amplitude * _sech(X + bend * np.cos(2.0 * Y / grid.L_y)) ** 2)


def l2_norm(f: Field) -> float:
    u = f.values()
    return float(np.sqrt(np.sum(u * u) * f.grid.cell_area))


def sw_residual(psi: Field, c: float, params: KPParams) -> float:
    """
    L2 norm of the travelling-wave residual

        R = c psi_xx - dxx(pow(psi, p+1) / (p+1)) - psi_xxxx - eps psi_yy,

    which vanishes for an exact travelling wave of speed c. All derivatives are spectral.
    """
    grid = psi.grid
    psi_hat = psi.coefficients()
    w_hat = forward(sign_power(psi.values(), params.p + 1)) / float(params.p + 1)
    dxx = grid.derivative(2, 0)
    r_hat = (c * dxx * psi_hat
             - dxx * w_hat
             - grid.derivative(4, 0) * psi_hat
             - params.epsilon * grid.derivative(0, 2) * psi_hat)
    return float(np.sqrt(np.sum(np.abs(r_hat) ** 2) * grid.spectral_weight))


# ============================================
# Solitary wave descriptions and constructor registry
# ============================================

class WaveKind(str, Enum):
    KDV_SOLITON = "kdv_soliton"
    LUMP = "lump"
    ZAITSEV = "zaitsev"


@dataclass(frozen=True)
class SolitaryWaveSpec:
    """Parameters of one exact travelling wave."""
    kind: WaveKind
    c: float
    alpha: float = 0.0
    beta: float = 0.0
    delta: float = 0.0
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", WaveKind(self.kind))
        if self.c <= 0:
            raise ConfigurationError(f"Solitary wave speed must be positive, got {self.c}")
        if self.kind is WaveKind.ZAITSEV:
            _check_zaitsev(self.alpha, self.beta)
            if not np.isclose(self.c, zaitsev_speed(self.alpha, self.beta), rtol=1e-12):
                raise ConfigurationError("Zaitsev speed must equal alpha^2 (4 - beta^2) / (1 - beta^2)")

    @property
    def peak(self) -> float:
        if self.kind is WaveKind.LUMP:
            return 8.0 * self.c
        if self.kind is WaveKind.KDV_SOLITON:
            return 1.5 * self.c
        return 12.0 * self.alpha ** 2 * (1.0 - self.beta) / (1.0 - self.beta) ** 2

    def evaluate(self, grid: SpectralGrid, t: float = 0.0) -> Field:
        """The wave translated to x0 + c t."""
        x = self.x0 + self.c * t
        if self.kind is WaveKind.LUMP:
            return lump(grid, self.c, x, self.y0)
        if self.kind is WaveKind.KDV_SOLITON:
            return kdv_soliton(grid, self.c, x)
        return zaitsev(grid, self.alpha, self.beta, x)[0]


class Constructor(Protocol):
    """Callable building a field on a grid from keyword parameters."""

    def __call__(self, grid: SpectralGrid, **params: Any) -> Field:
        ...


def _zaitsev_field(grid: SpectralGrid, alpha: float, beta: float, x0: float = 0.0) -> Field:
    return zaitsev(grid, alpha, beta, x0)[0]


CONSTRUCTORS: Dict[str, Callable[..., Field]] = {
    "kdv_soliton": kdv_soliton,
    "a_sech2": a_sech2,
    "lump": lump,
    "zaitsev": _zaitsev_field,
    "perturbation_pair": perturbation_pair,
    "gaussian_dx": gaussian_dx,
    "gaussian_dxx": gaussian_dxx,
    "deformed_soliton": deformed_soliton,
}


def get_constructor(name: str) -> Constructor:
    """
    Look up an initial-data constructor by name.

    Raises:
        ConfigurationError: unknown name
    """
    if name not in CONSTRUCTORS:
        raise ConfigurationError(
            f"Unknown constructor: {name}. "
            f"Supported: {', '.join(CONSTRUCTORS.keys())}"
        )
    return CONSTRUCTORS[name]


@dataclass(frozen=True)
class InitialTerm:
    """One constructor invocation of a summed initial condition."""
    name: str
    params: Mapping[str, Any] = field(default_factory=dict)
    scale: float = 1.0


def build_initial_data(grid: SpectralGrid, terms: Sequence[InitialTerm]) -> Field:
    """
    Sum the constructor outputs and project the sum onto the zero-mass constraint.

    Raises:
        ConfigurationError: empty term list, unknown constructor or bad keyword
    """
    if not terms:
        raise ConfigurationError("Initial data needs at least one constructor")
    total = np.zeros(grid.shape)
    for term in terms:
        constructor = get_constructor(term.name)
        try:
            f = constructor(grid, **dict(term.params))
        except TypeError as e:
            raise ConfigurationError(f"Bad parameters for constructor '{term.name}': {e}") from e
        total += term.scale * f.values()
    return project_constraint(Field.from_physical(grid, total))
