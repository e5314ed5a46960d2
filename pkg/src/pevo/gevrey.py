"""Gevrey weights and norms, Gevrey cutoff functions, and the Gevrey datum.

The datum is ``phi`` with ``phi_hat(xi) = exp(-2 rho0 <xi>^(1/theta))``,
``<xi> = sqrt(1 + xi^2)``; its translates ``phi_k(x) = phi(x - center)`` are
built on the Fourier side as ``exp(-i center xi) phi_hat(xi)``.

Two cutoff functions are provided because no nonconstant compactly supported
function can both equal 1 on an interval and have a nonnegative Fourier
transform:

``plateau``
    ``h = 1`` on ``|x| <= 1/2``, ``h = 0`` on ``|x| >= 1``; the transition is the
    normalized primitive of the Gevrey bump ``g(y) = exp(-(1-y^2)^(-1/(theta_h-1)))``.
``pos_fourier``
    ``h(x) = (g * g)(2x) / (g * g)(0)``, so ``h_hat(xi) = g_hat(xi/2)^2 / (2 (g*g)(0)) >= 0``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.interpolate import CubicSpline

from .errors import ContractError, SizingError, WeightOverflowError
from .grid import Field, Grid, Spectrum, fft_inverse, forward_transform, inverse_transform
from .jets import derivatives_from_jet, gevrey_bump_jet

__all__ = [
    "GevreyParams",
    "GevreyOverflowWarning",
    "gevrey_weight",
    "log_gevrey_weight",
    "gevrey_norm",
    "DatumSpec",
    "phi_hat",
    "log_phi_hat",
    "phi_spectrum",
    "make_phi",
    "phi_tail_bound",
    "GevreyBump",
    "make_bump",
    "MAX_DERIVATIVE_CAP",
    "DEFAULT_THETA_H",
]

MAX_DERIVATIVE_CAP = 32
DEFAULT_THETA_H = 1.1
_LOG_MAX = 709.0


class GevreyOverflowWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class GevreyParams:
    theta: float
    rho: float

    def __post_init__(self):
        if not self.theta > 1:
            raise ContractError(f"Gevrey index theta must exceed 1, got {self.theta}")
        if not self.rho > 0:
            raise ContractError(f"radius rho must be positive, got {self.rho}")


def japanese(xi):
    return np.sqrt(1.0 + np.square(xi))


def log_gevrey_weight(xi, params: GevreyParams):
    return params.rho * (1.0 + np.square(xi)) ** (0.5 / params.theta)


def gevrey_weight(xi, params: GevreyParams):
    """``exp(rho <xi>^(1/theta))``; overflow saturates to ``inf`` with a warning."""
    lw = log_gevrey_weight(xi, params)
    if np.any(lw > _LOG_MAX):
        warnings.warn(f"Gevrey weight overflow (log weight up to {np.max(lw):.1f})",
                      GevreyOverflowWarning, stacklevel=2)
    with np.errstate(over="ignore"):
        out = np.exp(lw)
    return float(out) if np.ndim(out) == 0 else out


def gevrey_norm(f: Field, params: GevreyParams) -> float:
    """``|| exp(rho <xi>^(1/theta)) u_hat ||_{L^2}`` with the grid's dxi/2pi measure."""
    s = forward_transform(f)
    lw = log_gevrey_weight(s.grid.xi, params)
    bad = lw > _LOG_MAX
    if np.any(bad):
        xi_bad = float(np.min(np.abs(s.grid.xi[bad])))
        raise WeightOverflowError(
            f"Gevrey weight overflows at represented frequency |xi| = {xi_bad:.6g}", xi=xi_bad)
    return float(np.linalg.norm(np.exp(lw) * s.coeffs) / np.sqrt(s.grid.length))


@dataclass(frozen=True)
class DatumSpec:
    rho0: float
    theta: float
    center: float = 0.0

    def __post_init__(self):
        if not self.rho0 > 0:
            raise ContractError(f"rho0 must be positive, got {self.rho0}")
        if not self.theta > 1:
            raise ContractError(f"theta must exceed 1, got {self.theta}")


def log_phi_hat(xi, rho0: float, theta: float):
    return -2.0 * rho0 * (1.0 + np.square(xi)) ** (0.5 / theta)


def phi_hat(xi, rho0: float, theta: float):
    return np.exp(log_phi_hat(xi, rho0, theta))


def phi_tail_bound(spec: DatumSpec, distance: float, strip: float = 0.9) -> float:
    """Bound on ``|phi(x)| / phi(0)`` at ``|x| >= distance``.

    ``phi_hat`` extends analytically to ``|Im xi| < 1``; shifting the inversion
    contour to ``Im xi = strip`` gives ``|phi(x)| <= exp(-strip |x|) I / (2 pi)``
    with ``I = int |phi_hat(xi + i strip)| dxi``.
    """
    a = strip
    def shifted(xi):
        z = (1.0 - a * a + xi * xi) + 2j * a * xi
        return np.exp(-2.0 * spec.rho0 * np.real(z ** (0.5 / spec.theta)))
    def on_axis(xi):
        return np.exp(log_phi_hat(xi, spec.rho0, spec.theta))
    i_shift = 2.0 * integrate.quad(shifted, 0.0, np.inf, limit=400)[0]
    i_axis = 2.0 * integrate.quad(on_axis, 0.0, np.inf, limit=400)[0]
    return float(np.exp(-a * distance) * i_shift / i_axis)


def _required_distance(spec: DatumSpec, tol: float, strip: float = 0.9) -> float:
    ratio = phi_tail_bound(spec, 0.0, strip)
    return max(0.0, math.log(ratio / tol) / strip)


TAIL_TOL = 1e-14


def check_datum_fits(spec: DatumSpec, grid: Grid, tol: float = TAIL_TOL):
    half = 0.5 * grid.length
    room = min(half - spec.center, spec.center + half)
    need = _required_distance(spec, tol)
    if room < need:
        raise SizingError(
            f"datum tail at the boundary exceeds {tol:g}: need distance {need:.4g} from center "
            f"{spec.center:.6g} to the boundary, have {room:.4g}; use length >= "
            f"{2 * (abs(spec.center) + need):.6g}",
            required_length=2 * (abs(spec.center) + need))


def phi_spectrum(spec: DatumSpec, grid: Grid, log_shift: float = 0.0) -> Spectrum:
    """Spectrum of ``phi_k`` times ``exp(log_shift)`` (the shift keeps tiny values representable)."""
    xi = grid.xi
    mag = np.exp(log_phi_hat(xi, spec.rho0, spec.theta) + log_shift)
    return Spectrum(grid, mag * np.exp(-1j * spec.center * xi))


def make_phi(spec: DatumSpec, grid: Grid, check_tail: bool = True) -> Field:
    if check_tail:
        check_datum_fits(spec, grid)
    return inverse_transform(phi_spectrum(spec, grid))


# ---------------------------------------------------------------------------
# cutoff functions


def _gauss_panels(a: float, b: float, n_panels: int, order: int = 16):
    t, w = leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    return edges, mid + half * t, half * w


@dataclass(frozen=True, eq=False)
class GevreyBump:
    """A Gevrey cutoff ``h`` with exact derivative evaluation.

    ``derivatives(x, order)`` returns ``h^(a)(x)`` for ``a = 0..order``.  For the
    plateau variant every derivative of order >= 1 comes straight from the jet of
    ``g``; values use a cumulative Gauss-Legendre table of the primitive plus a
    local Taylor correction.  The pos_fourier variant is tabulated by quadrature
    of the autocorrelation on ``fine_grid`` and interpolated by cubic splines.
    """

    variant: str
    theta_h: float
    max_order: int
    fine_grid: Grid = field(repr=False)

    @property
    def exponent(self) -> float:
        return 1.0 / (self.theta_h - 1.0)

    # -- shared pieces -------------------------------------------------------
    @cached_property
    def _primitive_table(self):
        n_panels = 4096
        edges, nodes, weights = _gauss_panels(-1.0, 1.0, n_panels)
        g = gevrey_bump_jet(nodes.ravel(), self.exponent, 0)[0].reshape(nodes.shape)
        panel = np.sum(g * weights, axis=1)
        cum = np.concatenate([[0.0], np.cumsum(panel)])
        total = cum[-1]
        # S(y) = int_y^1 g / total, decreasing from 1 to 0
        return edges, (total - cum) / total, total

    @property
    def g_mass(self) -> float:
        return self._primitive_table[2]

    def _smoothstep(self, y: np.ndarray, order: int) -> np.ndarray:
        """Derivatives 0..order of ``S(y) = int_y^1 g / int_{-1}^1 g``."""
        edges, svals, total = self._primitive_table
        y = np.asarray(y, dtype=float)
        out = np.zeros((order + 1,) + y.shape)
        if order >= 1:
            out[1:] = -derivatives_from_jet(gevrey_bump_jet(y, self.exponent, order - 1)) / total
        # value via nearest table node + Taylor in the offset
        idx = np.clip(np.rint((y + 1.0) / (edges[1] - edges[0])).astype(int), 0, edges.size - 1)
        y0 = edges[idx]
        d = y - y0
        taylor_order = 14
        jet0 = gevrey_bump_jet(y0, self.exponent, taylor_order - 1)
        corr = np.zeros_like(y)
        dk = np.ones_like(y)
        for k in range(1, taylor_order + 1):
            dk = dk * d
            corr += jet0[k - 1] * dk / k
        out[0] = svals[idx] - corr / total
        out[0] = np.where(y <= -1.0, 1.0, np.where(y >= 1.0, 0.0, out[0]))
        return out

    @cached_property
    def _autocorr_tables(self):
        # A_a(s) = (g * g^(a))(s) on s in [-2, 2]; trapezoid rule is spectral for g in C_0^inf
        m = 2 ** 13
        tau = np.linspace(-1.0, 1.0, m + 1)
        dtau = tau[1] - tau[0]
        gj = derivatives_from_jet(gevrey_bump_jet(tau, self.exponent, self.max_order))
        tables = [np.convolve(gj[0], gj[a]) * dtau for a in range(self.max_order + 1)]
        s = np.linspace(-2.0, 2.0, 2 * m + 1)
        a0 = tables[0][m]
        splines = [CubicSpline(s, t / a0) for t in tables]
        return s, splines, a0

    # -- public ---------------------------------------------------------------
    def derivatives(self, x, order: int = 0) -> np.ndarray:
        if order > self.max_order:
            raise ContractError(f"derivative order {order} exceeds this bump's max_order {self.max_order}")
        x = np.asarray(x, dtype=float)
        if self.variant == "plateau":
            ax = np.abs(x)
            out = np.zeros((order + 1,) + x.shape)
            out[0] = np.where(ax <= 0.5, 1.0, 0.0)
            trans = (ax > 0.5) & (ax < 1.0)
            if np.any(trans):
                y = 4.0 * (ax[trans] - 0.75)
                sd = self._smoothstep(y, order)
                scale = 4.0 ** np.arange(order + 1)
                sgn = np.sign(x[trans])
                parity = sgn[None, :] ** np.arange(order + 1)[:, None]
                out[:, trans] = sd * scale[:, None] * parity
            return out
        s, splines, _ = self._autocorr_tables
        out = np.zeros((order + 1,) + x.shape)
        inside = np.abs(x) < 1.0
        for a in range(order + 1):
            out[a][inside] = (2.0 ** a) * splines[a](2.0 * x[inside])
        return out

    def __call__(self, x, alpha: int = 0) -> np.ndarray:
        return self.derivatives(x, alpha)[alpha]

    def fourier(self, xi) -> np.ndarray:
        """Continuum Fourier transform ``h_hat(xi) = int h(x) exp(-i x xi) dx`` (h is even)."""
        xi = np.asarray(xi, dtype=float)
        if self.variant == "pos_fourier":
            _, _, a0 = self._autocorr_tables
            return self._g_hat(0.5 * xi) ** 2 / (2.0 * a0)
        _, nodes, weights = _gauss_panels(0.0, 1.0, 512)
        xs = nodes.ravel()
        hv = self.derivatives(xs, 0)[0] * weights.ravel()
        flat = np.atleast_1d(xi).ravel()
        out = np.array([2.0 * np.sum(hv * np.cos(v * xs)) for v in flat])
        return out.reshape(np.shape(xi))

    def _g_hat(self, omega):
        _, nodes, weights = _gauss_panels(0.0, 1.0, 512)
        ts = nodes.ravel()
        gw = gevrey_bump_jet(ts, self.exponent, 0)[0] * weights.ravel()
        flat = np.atleast_1d(omega).ravel()
        out = np.array([2.0 * np.sum(gw * np.cos(w * ts)) for w in flat])
        return out.reshape(np.shape(omega))

    @cached_property
    def fine_samples(self) -> np.ndarray:
        """``h^(a)`` sampled on ``fine_grid`` for ``a = 0..max_order``."""
        return self.derivatives(self.fine_grid.x, self.max_order)

    def sup_derivatives(self) -> np.ndarray:
        return np.max(np.abs(self.fine_samples), axis=1)


def make_bump(variant: str = "plateau", theta_h: float = DEFAULT_THETA_H,
              max_derivative_order: int = 12, fine_points: int = 2 ** 16) -> GevreyBump:
    if variant not in ("plateau", "pos_fourier"):
        raise ContractError(f"unknown bump variant {variant!r}")
    if not theta_h > 1:
        raise ContractError(f"theta_h must exceed 1, got {theta_h}")
    if not 0 <= max_derivative_order <= MAX_DERIVATIVE_CAP:
        raise ContractError(
            f"max_derivative_order {max_derivative_order} is outside [0, {MAX_DERIVATIVE_CAP}]")
    return GevreyBump(variant, float(theta_h), int(max_derivative_order), Grid(fine_points, 2.5))
