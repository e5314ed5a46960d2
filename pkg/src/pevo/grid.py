"""Periodic grids and the continuum-normalized discrete Fourier transform.

Nodes are ``x_m = -L/2 + m*h`` with ``h = L/n`` and dual frequencies
``xi_n = 2*pi*n/L``.  The forward transform carries the spacing factor,

    u_hat(xi_n) = h * sum_m u(x_m) exp(-i xi_n x_m),

so that ``u_hat`` approximates the Fourier transform on the real line, and the
inverse carries ``1/L = dxi/(2*pi)``,

    u(x_m) = (1/L) * sum_n u_hat(xi_n) exp(i xi_n x_m).

With this pair the discrete Parseval identity reads

    h * sum_m |u(x_m)|**2 == (1/L) * sum_n |u_hat(xi_n)|**2

exactly (up to rounding).  Spectral arrays are stored in FFT order
(``0, 1, ..., n/2-1, -n/2, ..., -1``); ``Grid.xi`` uses the same order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import ContractError

__all__ = [
    "Grid",
    "Field",
    "Spectrum",
    "forward_transform",
    "inverse_transform",
    "l2_norm",
    "spectral_norm",
    "FFT_WORKERS",
]

# scipy.fft thread count; -1 uses every core.
FFT_WORKERS = -1


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform periodic grid on ``[-L/2, L/2)`` with a power-of-two size."""

    n_points: int
    length: float

    def __post_init__(self):
        if not isinstance(self.n_points, (int, np.integer)) or not _is_power_of_two(int(self.n_points)):
            raise ContractError(f"n_points must be a power of two, got {self.n_points!r}")
        if not (np.isfinite(self.length) and self.length > 0):
            raise ContractError(f"length must be positive and finite, got {self.length!r}")
        object.__setattr__(self, "n_points", int(self.n_points))
        object.__setattr__(self, "length", float(self.length))

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return self.n_points == other.n_points and self.length == other.length

    def __hash__(self):
        return hash((self.n_points, self.length))

    @property
    def spacing(self) -> float:
        return self.length / self.n_points

    @property
    def dxi(self) -> float:
        return 2.0 * np.pi / self.length

    @property
    def xi_max(self) -> float:
        """Largest represented |xi| (the Nyquist frequency)."""
        return np.pi / self.spacing

    @cached_property
    def x(self) -> np.ndarray:
        return -0.5 * self.length + self.spacing * np.arange(self.n_points)

    @cached_property
    def xi(self) -> np.ndarray:
        return self.dxi * sfft.fftfreq(self.n_points, d=1.0 / self.n_points)

    @cached_property
    def _sign(self) -> np.ndarray:
        # exp(i xi_n L/2) = (-1)**n; n and its FFT index share parity since n_points is even
        s = np.ones(self.n_points)
        s[1::2] = -1.0
        return s

    @property
    def nyquist_index(self) -> int:
        return self.n_points // 2

    def index_of_x(self, x0: float) -> int:
        """Index of the node closest to ``x0`` (no wrapping)."""
        return int(np.clip(np.rint((x0 + 0.5 * self.length) / self.spacing), 0, self.n_points - 1))

    def index_of_xi(self, xi0: float) -> int:
        k = int(np.rint(xi0 / self.dxi))
        if not -self.n_points // 2 <= k < self.n_points // 2:
            raise ContractError(f"frequency {xi0} is not represented on {self!r}")
        return k % self.n_points

    def contains_interval(self, a: float, b: float) -> bool:
        return -0.5 * self.length <= a and b < 0.5 * self.length


@dataclass(frozen=True, eq=False)
class Field:
    """Samples ``u(x_m)`` of a function on a grid."""

    grid: Grid
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if s.shape != (self.grid.n_points,):
            raise ContractError(
                f"field has {s.shape} samples but grid has {self.grid.n_points} points")
        object.__setattr__(self, "samples", s)

    def check_finite(self):
        if not np.all(np.isfinite(self.samples)):
            raise ContractError("field contains non-finite samples")
        return self


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Values ``u_hat(xi_n)`` in FFT order."""

    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.grid.n_points,):
            raise ContractError(
                f"spectrum has {c.shape} coefficients but grid has {self.grid.n_points} points")
        object.__setattr__(self, "coeffs", c)


def fft_forward(grid: Grid, samples: np.ndarray) -> np.ndarray:
    """Array-level forward transform (no wrapping, no checks)."""
    return grid.spacing * grid._sign * sfft.fft(samples, workers=FFT_WORKERS)


def fft_inverse(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    return sfft.ifft(grid._sign * coeffs, workers=FFT_WORKERS) / grid.spacing


def forward_transform(f: Field) -> Spectrum:
    f.check_finite()
    return Spectrum(f.grid, fft_forward(f.grid, f.samples))


def inverse_transform(s: Spectrum) -> Field:
    if not np.all(np.isfinite(s.coeffs)):
        raise ContractError("spectrum contains non-finite coefficients")
    return Field(s.grid, fft_inverse(s.grid, s.coeffs))


def l2_norm(f: Field) -> float:
    """Discrete L2(R) norm ``sqrt(h * sum |u|^2)``."""
    return float(np.sqrt(f.grid.spacing) * np.linalg.norm(f.samples))


def spectral_norm(s: Spectrum) -> float:
    """The same norm computed on the Fourier side, ``sqrt(sum |u_hat|^2 / L)``."""
    return float(np.linalg.norm(s.coeffs) / np.sqrt(s.grid.length))
