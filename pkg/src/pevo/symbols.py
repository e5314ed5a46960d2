"""Separable symbols, left (Kohn-Nirenberg) quantization and packet cutoffs.

A symbol is stored as ``p(x_m, xi_n) = sum_t a_t(x_m) b_t(xi_n)`` and quantized as

    p(x, D) u = sum_t a_t * F^{-1}[ b_t * F[u] ],

the discrete form of ``int exp(i x xi) p(x, xi) u_hat(xi) dxi / (2 pi)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ContractError, SizingError
from .gevrey import GevreyBump
from .grid import Field, Grid, fft_forward, fft_inverse

__all__ = [
    "SampledSymbol",
    "apply",
    "dense_matrix",
    "PacketCutoffs",
    "make_packet_cutoffs",
    "seminorm",
    "DENSE_LIMIT",
]

DENSE_LIMIT = 1024


@dataclass(frozen=True, eq=False)
class SampledSymbol:
    grid: Grid
    terms: tuple = field(repr=False)

    def __post_init__(self):
        n = self.grid.n_points
        terms = []
        for a, b in self.terms:
            a = np.asarray(a)
            b = np.asarray(b)
            if np.ndim(a) == 0:
                a = np.full(n, a, dtype=complex)
            if np.ndim(b) == 0:
                b = np.full(n, b, dtype=complex)
            if a.shape != (n,) or b.shape != (n,):
                raise ContractError(f"symbol profiles must have length {n}")
            if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
                raise ContractError("symbol profiles must be finite")
            terms.append((a, b))
        object.__setattr__(self, "terms", tuple(terms))

    @classmethod
    def from_profiles(cls, grid: Grid, x_profile=1.0, xi_profile=1.0) -> "SampledSymbol":
        return cls(grid, ((x_profile, xi_profile),))

    def __add__(self, other: "SampledSymbol") -> "SampledSymbol":
        if other.grid != self.grid:
            raise ContractError("cannot add symbols on different grids")
        return SampledSymbol(self.grid, self.terms + other.terms)

    def scaled(self, c) -> "SampledSymbol":
        return SampledSymbol(self.grid, tuple((c * a, b) for a, b in self.terms))

    def evaluate(self, ix=None, ixi=None) -> np.ndarray:
        """Symbol values on the node sub-lattice ``x[ix] x xi[ixi]`` (all nodes by default)."""
        sx = slice(None) if ix is None else ix
        sxi = slice(None) if ixi is None else ixi
        out = 0
        for a, b in self.terms:
            out = out + np.multiply.outer(a[sx], b[sxi])
        return np.asarray(out)


def apply(sym: SampledSymbol, f: Field) -> Field:
    if f.grid != sym.grid:
        raise ContractError("symbol and field live on different grids")
    uh = fft_forward(f.grid, f.samples)
    out = np.zeros(f.grid.n_points, dtype=complex)
    for a, b in sym.terms:
        out += a * fft_inverse(f.grid, b * uh)
    return Field(f.grid, out)


def dense_matrix(sym: SampledSymbol) -> np.ndarray:
    """Explicit matrix of ``p(x, D)`` built from plane waves (no FFT involved)."""
    g = sym.grid
    if g.n_points > DENSE_LIMIT:
        raise ContractError(f"dense_matrix is limited to {DENSE_LIMIT} points, grid has {g.n_points}")
    phase = np.exp(1j * np.multiply.outer(g.x, g.xi))       # [m, n] = exp(i xi_n x_m)
    to_spec = g.spacing * phase.conj().T                      # [n, m'] forward weights
    from_spec = phase / g.length                              # [m, n] inverse weights
    out = np.zeros((g.n_points, g.n_points), dtype=complex)
    for a, b in sym.terms:
        out += a[:, None] * ((from_spec * b[None, :]) @ to_spec)
    return out


# ---------------------------------------------------------------------------
# seminorms

_FD8 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])


def _fd_derivative(values: np.ndarray, step: float) -> np.ndarray:
    """Eighth-order central difference; second-order one-sided at the four end nodes."""
    v = np.asarray(values)
    out = np.empty_like(v)
    if v.size < 9:
        return np.gradient(v, step, edge_order=2)
    out[4:-4] = sum(c * v[k:v.size - 8 + k] for k, c in enumerate(_FD8)) / step
    edge = np.gradient(v, step, edge_order=2)
    out[:4] = edge[:4]
    out[-4:] = edge[-4:]
    return out


def _x_derivative(grid: Grid, a: np.ndarray) -> np.ndarray:
    # x profiles are periodic on the grid: spectral differentiation
    return fft_inverse(grid, 1j * grid.xi * _nyq_zero(grid, fft_forward(grid, a)))


def _nyq_zero(grid, coeffs):
    c = coeffs.copy()
    c[grid.nyquist_index] = 0.0
    return c


def _xi_derivative(grid: Grid, b: np.ndarray) -> np.ndarray:
    # xi profiles are not periodic on the dual lattice: finite differences in signed order
    order = np.argsort(grid.xi)
    d = np.empty_like(b, dtype=complex)
    d[order] = _fd_derivative(b[order].astype(complex), grid.dxi)
    return d


SEMINORM_MAX_LEVEL = 4


def seminorm(sym: SampledSymbol, m: float = 0.0, level: int = 0) -> float:
    """``max_{a, b <= level} sup |d_xi^a d_x^b p| <xi>^(-m)`` over the grid nodes."""
    if not 0 <= level <= SEMINORM_MAX_LEVEL:
        raise ContractError(f"seminorm level must be in [0, {SEMINORM_MAX_LEVEL}], got {level}")
    g = sym.grid
    weight = (1.0 + g.xi ** 2) ** (-0.5 * m)
    x_ders = [[a] for a, _ in sym.terms]
    xi_ders = [[b] for _, b in sym.terms]
    for t in range(len(sym.terms)):
        for _ in range(level):
            x_ders[t].append(_x_derivative(g, x_ders[t][-1]))
            xi_ders[t].append(_xi_derivative(g, xi_ders[t][-1]))
    best = 0.0
    for ia in range(level + 1):
        for ib in range(level + 1):
            terms = [(x_ders[t][ib], xi_ders[t][ia] * weight) for t in range(len(sym.terms))]
            best = max(best, _sup_separable(terms))
    return best


def _sup_separable(terms) -> float:
    if len(terms) == 1:
        a, b = terms[0]
        return float(np.max(np.abs(a)) * np.max(np.abs(b)))
    # restrict to nodes where some profile is non-negligible, in chunks
    n = terms[0][0].size
    best = 0.0
    chunk = max(1, 2 ** 22 // n)
    for start in range(0, n, chunk):
        block = 0
        for a, b in terms:
            block = block + np.multiply.outer(a[start:start + chunk], b)
        best = max(best, float(np.max(np.abs(block))))
    return best


# ---------------------------------------------------------------------------
# packet cutoffs


@dataclass(frozen=True, eq=False)
class PacketCutoffs:
    """Localization symbols ``w_k^(ab)``, ``chi_k`` and ``psi_k`` for one packet.

    ``x_profiles[a]`` holds ``h^(a)((x - 4 s)/s)`` on the node range ``x_slice``
    (``s = nu^(p-1)``) and ``xi_profiles[b]`` holds ``h^(b)((xi - nu)/(nu/4))`` on
    the FFT-order index range ``xi_slice``; both vanish elsewhere.  Profiles are
    built on first access and cached.
    """

    grid: Grid
    nu: float
    p: int
    bump: GevreyBump = field(repr=False)
    cap: int
    x_slice: slice = field(repr=False)
    xi_slice: slice = field(repr=False)
    psi_covered: bool = True

    @property
    def scale(self) -> float:
        return float(self.nu) ** (self.p - 1)

    @property
    def center(self) -> float:
        return 4.0 * self.scale

    def x_profiles_at(self, x) -> np.ndarray:
        """``h^(a)((x - 4 s)/s)`` for ``a = 0..cap`` at arbitrary points."""
        return self.bump.derivatives((np.asarray(x) - self.center) / self.scale, self.cap)

    def xi_profiles_at(self, xi) -> np.ndarray:
        return self.bump.derivatives((np.asarray(xi) - self.nu) / (0.25 * self.nu), self.cap)

    @cached_property
    def x_profiles(self) -> np.ndarray:
        return self.x_profiles_at(self.grid.x[self.x_slice])

    @cached_property
    def xi_profiles(self) -> np.ndarray:
        return self.xi_profiles_at(self.grid.xi[self.xi_slice])

    @cached_property
    def chi(self) -> np.ndarray:
        return self.bump.derivatives((self.grid.xi - self.nu) / (0.75 * self.nu), 0)[0]

    @cached_property
    def psi(self) -> np.ndarray:
        return self.bump.derivatives((self.grid.x - self.center) / (3.0 * self.scale), 0)[0]

    def x_profile(self, alpha: int) -> np.ndarray:
        out = np.zeros(self.grid.n_points)
        out[self.x_slice] = self.x_profiles[alpha]
        return out

    def xi_profile(self, beta: int) -> np.ndarray:
        out = np.zeros(self.grid.n_points)
        out[self.xi_slice] = self.xi_profiles[beta]
        return out

    def w_symbol(self, alpha: int = 0, beta: int = 0) -> SampledSymbol:
        if alpha > self.cap or beta > self.cap:
            raise ContractError(f"(alpha, beta) = ({alpha}, {beta}) beyond cached cap {self.cap}")
        return SampledSymbol.from_profiles(self.grid, self.x_profile(alpha), self.xi_profile(beta))

    def psi_chi_symbol(self) -> SampledSymbol:
        return SampledSymbol.from_profiles(self.grid, self.psi, self.chi)


def _slice_between(grid_start: float, step: float, n: int, lo: float, hi: float) -> slice:
    """Contiguous index range of ``grid_start + step*i`` inside ``[lo, hi]``."""
    i0 = max(0, math.ceil((lo - grid_start) / step - 1e-9))
    i1 = min(n - 1, math.floor((hi - grid_start) / step + 1e-9))
    return slice(i0, max(i0, i1 + 1))


def make_packet_cutoffs(grid: Grid, nu: float, p: int, bump: GevreyBump,
                        alpha_beta_cap: int) -> PacketCutoffs:
    if bump.variant != "plateau":
        raise ContractError("packet cutoffs use the plateau bump")
    if not nu > 0 or p < 2:
        raise ContractError(f"need nu > 0 and p >= 2, got nu={nu}, p={p}")
    if alpha_beta_cap > bump.max_order:
        raise ContractError(
            f"alpha_beta_cap {alpha_beta_cap} exceeds the bump's max derivative order {bump.max_order}")
    s = float(nu) ** (p - 1)
    half = 0.5 * grid.length
    if 5.0 * s > half:
        raise SizingError(
            f"grid [-{half:.6g}, {half:.6g}) does not contain the x-support [3s, 5s] = "
            f"[{3 * s:.6g}, {5 * s:.6g}] of w_k", required_length=10.0 * s)
    if grid.xi_max < 1.75 * nu:
        need = int(2 ** math.ceil(math.log2(grid.length * 1.75 * nu / math.pi)))
        raise SizingError(
            f"grid resolves |xi| <= {grid.xi_max:.6g} but chi_k needs xi up to 7 nu/4 = {1.75 * nu:.6g}",
            required_points=need)
    xs = _slice_between(-half, grid.spacing, grid.n_points, 3.0 * s, 5.0 * s)
    # positive frequencies occupy FFT indices 0..n/2-1 in increasing order
    xis = _slice_between(0.0, grid.dxi, grid.n_points // 2, 0.75 * nu, 1.25 * nu)
    return PacketCutoffs(grid, float(nu), int(p), bump, int(alpha_beta_cap), xs, xis,
                         psi_covered=7.0 * s < half)
