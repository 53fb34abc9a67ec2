"""Doubly periodic Fourier grid, fields and diagonal spectral multipliers.

The domain is [-pi L_x, pi L_x) x [-pi L_y, pi L_y) sampled on N_x x N_y
uniform nodes. Arrays are indexed [i_x, i_y] (axis 0 is x). Wavenumbers are
xi1 = j / L_x and xi2 = k / L_y in the FFT ordering of scipy.fft, so a
multiplier array lines up with the output of ``to_spectral`` directly.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy import fft as sp_fft

from .errors import ConfigurationError, NumericalOverflowError


def _is_power_of_two(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and not isinstance(n, bool) and n >= 2 and (n & (n - 1)) == 0


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """
    Immutable doubly periodic grid with node and wavenumber arrays.

    Equality and hashing use the defining tuple (L_x, L_y, N_x, N_y) so a
    grid can key coefficient caches.
    """
    L_x: float
    L_y: float
    N_x: int
    N_y: int
    x_nodes: np.ndarray = field(init=False, repr=False)
    y_nodes: np.ndarray = field(init=False, repr=False)
    xi1: np.ndarray = field(init=False, repr=False)
    xi2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "x_nodes", _readonly(
            -np.pi * self.L_x + 2.0 * np.pi * self.L_x * np.arange(self.N_x) / self.N_x))
        object.__setattr__(self, "y_nodes", _readonly(
            -np.pi * self.L_y + 2.0 * np.pi * self.L_y * np.arange(self.N_y) / self.N_y))
        object.__setattr__(self, "xi1", _readonly(sp_fft.fftfreq(self.N_x, 1.0 / self.N_x) / self.L_x))
        object.__setattr__(self, "xi2", _readonly(sp_fft.fftfreq(self.N_y, 1.0 / self.N_y) / self.L_y))

    @property
    def key(self) -> Tuple[float, float, int, int]:
        return (float(self.L_x), float(self.L_y), int(self.N_x), int(self.N_y))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SpectralGrid):
            return NotImplemented
        return self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.N_x, self.N_y)

    @property
    def dx(self) -> float:
        return 2.0 * np.pi * self.L_x / self.N_x

    @property
    def dy(self) -> float:
        return 2.0 * np.pi * self.L_y / self.N_y

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def spectral_weight(self) -> float:
        """Factor turning sum |u_hat|^2 into the integral of u^2 (Parseval)."""
        return self.cell_area / (self.N_x * self.N_y)

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """Node coordinates as two N_x x N_y arrays (indexing 'ij')."""
        return np.meshgrid(self.x_nodes, self.y_nodes, indexing="ij")

    def wavenumbers(self) -> Tuple[np.ndarray, np.ndarray]:
        """xi1 and xi2 shaped for broadcasting against a spectral array."""
        return self.xi1[:, None], self.xi2[None, :]

    def nyquist_x(self) -> np.ndarray:
        """Boolean column selector of the x Nyquist mode j = -N_x/2."""
        return np.arange(self.N_x) == self.N_x // 2

    def nyquist_y(self) -> np.ndarray:
        return np.arange(self.N_y) == self.N_y // 2

    def derivative(self, order_x: int = 0, order_y: int = 0) -> np.ndarray:
        """
        Multiplier (i xi1)^order_x (i xi2)^order_y.

        Odd orders zero the Nyquist column (row) so that derivatives of real
        fields stay real. Even orders keep it, so derivative(2, 0) is -xi1^2
        there while derivative(1, 0) squared is 0: build second derivatives
        with derivative(2, 0), never by applying the first derivative twice.
        """
        kx = (1j * self.xi1) ** order_x
        ky = (1j * self.xi2) ** order_y
        if order_x % 2 == 1:
            kx = np.where(self.nyquist_x(), 0.0, kx)
        if order_y % 2 == 1:
            ky = np.where(self.nyquist_y(), 0.0, ky)
        return kx[:, None] * ky[None, :]

    def dealias_mask(self) -> np.ndarray:
        """2/3 rule: keep |j| <= N_x/3 and |k| <= N_y/3."""
        j = np.abs(sp_fft.fftfreq(self.N_x, 1.0 / self.N_x))
        k = np.abs(sp_fft.fftfreq(self.N_y, 1.0 / self.N_y))
        return (j <= self.N_x / 3.0)[:, None] & (k <= self.N_y / 3.0)[None, :]

    def outer_band(self) -> np.ndarray:
        """Modes with |j| > N_x/4 or |k| > N_y/4."""
        j = np.abs(sp_fft.fftfreq(self.N_x, 1.0 / self.N_x))
        k = np.abs(sp_fft.fftfreq(self.N_y, 1.0 / self.N_y))
        return (j > self.N_x / 4.0)[:, None] | (k > self.N_y / 4.0)[None, :]


def make_grid(L_x: float, L_y: float, N_x: int, N_y: int) -> SpectralGrid:
    """
    Build a grid on [-pi L_x, pi L_x) x [-pi L_y, pi L_y).

    Raises:
        ConfigurationError: nonpositive lengths or sizes that are not powers of two
    """
    for name, value in (("L_x", L_x), ("L_y", L_y)):
        if not np.isfinite(value) or value <= 0:
            raise ConfigurationError(f"{name} must be positive and finite, got {value}")
    for name, value in (("N_x", N_x), ("N_y", N_y)):
        if not _is_power_of_two(value):
            raise ConfigurationError(f"{name} must be a power of two >= 2, got {value}")
    return SpectralGrid(float(L_x), float(L_y), int(N_x), int(N_y))


class Representation(str, Enum):
    PHYSICAL = "physical"
    SPECTRAL = "spectral"
    BOTH = "both"


@dataclass(frozen=True, eq=False)
class Field:
    """A real scalar field with cached physical and/or spectral representation."""
    grid: SpectralGrid
    physical: Optional[np.ndarray] = None
    spectral: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.physical is None and self.spectral is None:
            raise ConfigurationError("Field needs a physical or a spectral representation")
        for arr in (self.physical, self.spectral):
            if arr is not None and arr.shape != self.grid.shape:
                raise ConfigurationError(
                    f"Field array has shape {arr.shape}, grid expects {self.grid.shape}"
                )

    @classmethod
    def from_physical(cls, grid: SpectralGrid, values: np.ndarray) -> "Field":
        return cls(grid, physical=np.asarray(values, dtype=np.float64))

    @classmethod
    def from_spectral(cls, grid: SpectralGrid, coefficients: np.ndarray) -> "Field":
        return cls(grid, spectral=np.asarray(coefficients, dtype=np.complex128))

    @property
    def representation(self) -> Representation:
        if self.physical is not None and self.spectral is not None:
            return Representation.BOTH
        if self.physical is not None:
            return Representation.PHYSICAL
        return Representation.SPECTRAL

    def values(self) -> np.ndarray:
        """Physical values, transforming if only the spectral cache exists."""
        if self.physical is not None:
            return self.physical
        return to_physical(self).physical

    def coefficients(self) -> np.ndarray:
        if self.spectral is not None:
            return self.spectral
        return to_spectral(self).spectral

    def __add__(self, other: "Field") -> "Field":
        if other.grid != self.grid:
            raise ConfigurationError("Cannot add fields on different grids")
        return Field.from_physical(self.grid, self.values() + other.values())

    def __mul__(self, scale: float) -> "Field":
        if self.physical is not None:
            return Field.from_physical(self.grid, scale * self.physical)
        return Field.from_spectral(self.grid, scale * self.spectral)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return self * -1.0


def to_spectral(f: Field) -> Field:
    """
    Forward DFT of the physical values (unnormalized, scipy.fft convention).

    Raises:
        NumericalOverflowError: physical values contain inf or nan
    """
    if f.spectral is not None:
        return f
    values = f.physical
    if not np.all(np.isfinite(values)):
        raise NumericalOverflowError("Field contains non-finite values")
    return Field(f.grid, physical=values, spectral=sp_fft.fft2(values))


def to_physical(f: Field) -> Field:
    """Inverse DFT; the imaginary round-off of a Hermitian spectrum is dropped."""
    if f.physical is not None:
        return f
    return Field(f.grid, physical=sp_fft.ifft2(f.spectral).real, spectral=f.spectral)


def apply_multiplier(f: Field, m: np.ndarray) -> Field:
    """
    Pointwise product in spectral space; the result carries only the spectral cache.

    Raises:
        ConfigurationError: multiplier shape differs from the grid shape
    """
    m = np.asarray(m)
    if m.shape != f.grid.shape:
        raise ConfigurationError(f"Multiplier shape {m.shape} does not match grid {f.grid.shape}")
    return Field.from_spectral(f.grid, f.coefficients() * m)


def forward(values: np.ndarray) -> np.ndarray:
    """Array-level forward transform used in the stepping hot path."""
    return sp_fft.fft2(values)


def inverse(coefficients: np.ndarray) -> np.ndarray:
    """Array-level inverse transform returning the real part."""
    return sp_fft.ifft2(coefficients).real
