"""Wave-packet energies and the experiments built on them.

The energy of a solution ``u`` localized at the packet ``(4 nu^(p-1), nu)`` is

    E_k = sum_{a, b <= N_k} (a! b!)^(-theta1) || w_k^(ab)(x, D) u ||,

assembled in log space.  Because ``w_k^(ab)`` is a product of an x-profile and a
xi-profile supported in a band of width ``nu/2``, each norm is evaluated from
the band alone: the band is shifted to baseband and inverted on a coarser grid
of ``M`` points, which samples ``|w u|^2`` without aliasing once ``2 pi M / L``
exceeds twice the band width.
"""
from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.fft as sfft
from scipy.special import gammaln, logsumexp

from .errors import ContractError, NumericalError, SizingError, TruncationError
from .evolve import SolveOptions, solve
from .gevrey import (DEFAULT_THETA_H, DatumSpec, GevreyBump, _required_distance, log_phi_hat,
                     make_bump, make_phi, TAIL_TOL)
from .grid import FFT_WORKERS, Grid
from .operator import ModelOperator, xi_threshold
from .symbols import PacketCutoffs, make_packet_cutoffs

__all__ = [
    "compute_Nk",
    "bicharacteristic",
    "WavePacketRun",
    "make_run",
    "EnergyReport",
    "log_norm_table",
    "assemble_energy",
    "compute_energy",
    "datum_energy",
    "experiment_grid",
    "ExperimentTemplate",
    "PacketResult",
    "run_packet",
    "predicted_rate",
    "FitResult",
    "fit_power_law",
    "GrowthResult",
    "growth_experiment",
    "BoundednessResult",
    "boundedness_experiment",
    "DatumDecayResult",
    "datum_decay_experiment",
    "g_domain_bound",
    "gronwall_envelope",
    "fit_gronwall",
    "TAIL_CERTIFICATE",
]

TAIL_CERTIFICATE = 1e-8


def compute_Nk(nu: float, lam: float, theta1: float) -> int:
    if not (nu >= 1 and 0 < lam and theta1 > 0):
        raise ContractError(f"invalid arguments nu={nu}, lambda={lam}, theta1={theta1}")
    value = nu ** (lam / theta1)
    n = math.floor(value)
    # guard exact powers against a last-bit undershoot
    if math.isclose(value, n + 1, rel_tol=1e-13):
        n += 1
    return int(n)


def bicharacteristic(x0, xi0, t, p: int, a_p: float = 1.0):
    """Hamilton flow of ``a_p xi^p``: ``(x0 + p a_p t xi0^(p-1), xi0)``."""
    return x0 + p * a_p * t * np.power(xi0, p - 1), xi0


@dataclass(frozen=True)
class WavePacketRun:
    nu: float
    p: int
    lam: float
    theta1: float
    theta: float
    rho0: float
    N_k: int
    alpha_beta_cap: int
    t_star: float
    theta_h: float = DEFAULT_THETA_H

    def __post_init__(self):
        if not self.theta1 > self.theta_h > 1:
            raise ContractError(f"need theta1 > theta_h > 1, got {self.theta1}, {self.theta_h}")
        if not 0 < self.lam < 1:
            raise ContractError(f"lambda must lie in (0, 1), got {self.lam}")
        if self.N_k != compute_Nk(self.nu, self.lam, self.theta1):
            raise ContractError("N_k does not match floor(nu^(lambda/theta1))")
        if self.alpha_beta_cap > self.N_k:
            raise ContractError("alpha_beta_cap cannot exceed N_k")

    @property
    def truncated(self) -> bool:
        return self.alpha_beta_cap < self.N_k


def make_run(nu: float, p: int, lam: float = 0.5, theta1: float = 3.0, theta: float = 2.0,
             rho0: float = 1.0, t_star: float = 0.0, cap: int = 12,
             theta_h: float = DEFAULT_THETA_H) -> WavePacketRun:
    nk = compute_Nk(nu, lam, theta1)
    return WavePacketRun(float(nu), int(p), float(lam), float(theta1), float(theta), float(rho0),
                         nk, min(nk, int(cap)), float(t_star), float(theta_h))


@dataclass(frozen=True, eq=False)
class EnergyReport:
    times: np.ndarray
    log_E: np.ndarray
    term_table: np.ndarray = field(repr=False)
    E0_log: float
    nu: float = 0.0
    N_k: int = 0
    cap: int = 0
    tail_fraction: float = 0.0


# ---------------------------------------------------------------------------
# localized norms


# spectral half-width of the x-profiles, in units of 1/nu^(p-1)
X_PROFILE_BANDWIDTH = 400.0


def _band_size(cutoffs: PacketCutoffs) -> int:
    g = cutoffs.grid
    width = cutoffs.xi_slice.stop - cutoffs.xi_slice.start
    extra = X_PROFILE_BANDWIDTH / cutoffs.scale / g.dxi
    return 1 << max(4, math.ceil(math.log2(2 * (width + extra))))


def log_norm_table(band: np.ndarray, cutoffs: PacketCutoffs, cap: Optional[int] = None,
                   decimate: bool = True) -> np.ndarray:
    """``log || w_k^(ab)(x, D) u ||`` for ``a, b <= cap``.

    ``band`` holds ``u_hat`` on ``cutoffs.xi_slice`` (continuum normalization).
    """
    g = cutoffs.grid
    cap = cutoffs.cap if cap is None else cap
    if cap > cutoffs.cap:
        raise ContractError(f"cap {cap} exceeds the cutoffs' cap {cutoffs.cap}")
    k = np.arange(cutoffs.xi_slice.start, cutoffs.xi_slice.stop)
    if band.shape != k.shape:
        raise ContractError("band does not match the cutoff xi-support")
    m = _band_size(cutoffs)
    if not decimate or m >= g.n_points:
        m = g.n_points
    L = g.length
    step = L / m
    r0 = max(0, math.ceil((3.0 * cutoffs.scale + 0.5 * L) / step - 1e-9))
    r1 = min(m - 1, math.floor((5.0 * cutoffs.scale + 0.5 * L) / step + 1e-9))
    xr = -0.5 * L + step * np.arange(r0, r1 + 1)
    xw2 = np.square(cutoffs.x_profiles_at(xr)[:cap + 1])          # (cap+1, nx)
    xiw = cutoffs.xi_profiles[:cap + 1]                              # (cap+1, nk)
    bins = k % m
    signed = np.where(k % 2 == 0, 1.0, -1.0) * band
    out = np.empty((cap + 1, cap + 1))
    with np.errstate(divide="ignore"):
        for b in range(cap + 1):
            buf = np.zeros(m, dtype=complex)
            np.add.at(buf, bins, xiw[b] * signed)
            vals = sfft.ifft(buf, workers=FFT_WORKERS, overwrite_x=True)[r0:r1 + 1] * (m / L)
            sq = step * (xw2 @ np.square(np.abs(vals)))
            out[:, b] = 0.5 * np.log(sq)
    return out


def _log_factorial_weights(cap: int, theta1: float) -> np.ndarray:
    lf = gammaln(np.arange(cap + 1) + 1.0)
    return -theta1 * (lf[:, None] + lf[None, :])


def assemble_energy(log_norms: np.ndarray, log_scale: float, theta1: float):
    """Return ``(log E, weighted log terms, tail fraction)`` from a log-norm table."""
    cap = log_norms.shape[0] - 1
    terms = log_norms + _log_factorial_weights(cap, theta1) + log_scale
    total = float(logsumexp(terms)) if np.any(np.isfinite(terms)) else -math.inf
    shell = np.zeros_like(terms, dtype=bool)
    shell[cap, :] = True
    shell[:, cap] = True
    if math.isfinite(total) and np.any(np.isfinite(terms[shell])):
        tail = float(np.exp(logsumexp(terms[shell]) - total))
    else:
        tail = 0.0
    return total, terms, tail


def _certify(tail: float, run: WavePacketRun, where: str):
    if run.truncated and tail >= TAIL_CERTIFICATE:
        raise TruncationError(
            f"truncated energy sum at cap {run.alpha_beta_cap} < N_k = {run.N_k}: the outer "
            f"(alpha, beta) shell carries {tail:.3g} of the total at {where} "
            f"(limit {TAIL_CERTIFICATE:g}); raise alpha_beta_cap")


def compute_energy(trajectory: Sequence, cutoffs: PacketCutoffs, run: WavePacketRun,
                   decimate: bool = True) -> EnergyReport:
    if not trajectory:
        raise ContractError("empty trajectory")
    if cutoffs.cap < run.alpha_beta_cap:
        raise ContractError("cutoffs cached fewer derivatives than the run needs")
    times, log_E, tables, tails = [], [], [], []
    for st in trajectory:
        if st.grid != cutoffs.grid:
            raise ContractError("trajectory and cutoffs live on different grids")
        band = st.spectrum.coeffs[cutoffs.xi_slice]
        norms = log_norm_table(band, cutoffs, run.alpha_beta_cap, decimate)
        total, terms, tail = assemble_energy(norms, st.log_scale, run.theta1)
        _certify(tail, run, f"t={st.time:.6g}")
        times.append(st.time)
        log_E.append(total)
        tables.append(terms)
        tails.append(tail)
    times = np.array(times)
    i_star = int(np.argmin(np.abs(times - run.t_star)))
    return EnergyReport(times, np.array(log_E), tables[i_star], float(log_E[0]), run.nu, run.N_k,
                        run.alpha_beta_cap, float(max(tails)))


def datum_energy(run: WavePacketRun, cutoffs: PacketCutoffs) -> tuple:
    """``log E_k(0)`` of the exact datum spectrum (no transform round-off)."""
    g = cutoffs.grid
    xi = g.xi[cutoffs.xi_slice]
    lphi = log_phi_hat(xi, run.rho0, run.theta)
    shift = float(np.max(lphi))
    band = np.exp(lphi - shift) * np.exp(-1j * cutoffs.center * xi)
    norms = log_norm_table(band, cutoffs, run.alpha_beta_cap)
    total, terms, tail = assemble_energy(norms, shift, run.theta1)
    _certify(tail, run, "t=0")
    return total, terms, tail


# ---------------------------------------------------------------------------
# grids and single packets


def experiment_grid(nu: float, p: int, rho0: float, theta: float, cutoff_factor: float = 2.5,
                    length_factor: float = 10.0) -> Grid:
    """Grid with ``L >= max(length_factor nu^(p-1), datum tail room)`` and Nyquist ``cutoff_factor nu``."""
    s = float(nu) ** (p - 1)
    center = 4.0 * s
    need = _required_distance(DatumSpec(rho0, theta, center), TAIL_TOL)
    l_min = max(length_factor * s, 2.0 * (center + need))
    n = 1 << math.ceil(math.log2(l_min * cutoff_factor * nu / math.pi))
    return Grid(n, math.pi * n / (cutoff_factor * nu))


@dataclass(frozen=True)
class ExperimentTemplate:
    """Per-sweep settings; ``lam=None`` uses ``min(0.5, 0.9 Xi)`` and ``t_star=None`` is automatic."""

    theta: float = 4.0
    rho0: float = 1.0
    lam: Optional[float] = None
    theta1: float = 3.0
    theta_h: float = DEFAULT_THETA_H
    cap: int = 12
    t_star: Optional[float] = None
    gain: float = 0.3
    cutoff_factor: float = 2.5
    length_factor: float = 10.0
    n_records: int = 5
    dt: Optional[float] = None


@dataclass(frozen=True, eq=False)
class PacketResult:
    nu: float
    run: WavePacketRun
    n_points: int
    length: float
    report: EnergyReport
    lambda_rate: float
    wall_seconds: float


def predicted_rate(op: ModelOperator, nu: float) -> float:
    """Local amplification rate ``sum_j A_j <4 nu^(p-1)>^(-sigma_j) nu^(p-j)`` at the packet."""
    x = 4.0 * float(nu) ** (op.p - 1)
    return float(sum(c.A * (1 + x * x) ** (-0.5 * c.sigma) * nu ** (op.p - c.j) for c in op.lower))


def transport_limit(p: int, a_p: float = 1.0) -> float:
    """Time for which the fastest band frequency ``5 nu/4`` stays within ``nu^(p-1)/4`` of the center."""
    return 0.25 / (p * abs(a_p) * 1.25 ** (p - 1))


def resolve_lambda(op: ModelOperator, template: ExperimentTemplate) -> float:
    if template.lam is not None:
        return template.lam
    try:
        xi = xi_threshold(op).xi
    except ContractError:
        return 0.5
    return min(0.5, 0.9 * xi) if xi > 0 else 0.5


def resolve_t_star(op: ModelOperator, nu: float, template: ExperimentTemplate) -> float:
    if template.t_star is not None:
        return template.t_star
    rate = predicted_rate(op, nu)
    t = transport_limit(op.p, op.a_p)
    if rate > 0:
        t = min(t, template.gain / rate)
    return t


def run_packet(op: ModelOperator, nu: float, template: ExperimentTemplate,
               bump: Optional[GevreyBump] = None) -> PacketResult:
    t0 = _time.perf_counter()
    lam = resolve_lambda(op, template)
    t_star = resolve_t_star(op, nu, template)
    run = make_run(nu, op.p, lam, template.theta1, template.theta, template.rho0, t_star,
                   template.cap, template.theta_h)
    grid = experiment_grid(nu, op.p, template.rho0, template.theta, template.cutoff_factor,
                           template.length_factor)
    if bump is None:
        bump = make_bump("plateau", template.theta_h, max(run.alpha_beta_cap, 1))
    cutoffs = make_packet_cutoffs(grid, nu, op.p, bump, run.alpha_beta_cap)
    u0 = make_phi(DatumSpec(template.rho0, template.theta, cutoffs.center), grid)
    times = tuple(np.linspace(0.0, t_star, template.n_records))
    opts = SolveOptions(t_end=t_star, dt=template.dt, record_times=times,
                        spectral_cutoff=template.cutoff_factor * nu)
    traj = solve(op, u0, opts)
    report = compute_energy(traj, cutoffs, run)
    rate = (report.log_E[-1] - report.log_E[0]) / t_star if t_star > 0 else 0.0
    return PacketResult(float(nu), run, grid.n_points, grid.length, report, float(rate),
                        _time.perf_counter() - t0)


def _map_packets(fn, nus, jobs: int):
    if jobs <= 1 or len(nus) <= 1:
        return [fn(nu) for nu in nus]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, nus))  # map preserves nu order


class _PacketJob:
    def __init__(self, op, template):
        self.op = op
        self.template = template

    def __call__(self, nu):
        return run_packet(self.op, nu, self.template)


# ---------------------------------------------------------------------------
# fits and experiments


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    residuals: tuple
    stderr: float


def fit_power_law(nus: Sequence[float], values: Sequence[float]) -> FitResult:
    """Least-squares line through ``(log nu, log value)``."""
    x = np.log(np.asarray(nus, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    if x.size < 2:
        raise ContractError("a power-law fit needs at least two points")
    if not np.all(np.isfinite(y)):
        raise NumericalError("power-law fit needs positive values")
    slope, intercept = np.polyfit(x, y, 1)
    res = y - (slope * x + intercept)
    if x.size > 2:
        stderr = float(np.sqrt(np.sum(res ** 2) / (x.size - 2) / np.sum((x - x.mean()) ** 2)))
    else:
        stderr = 0.0
    return FitResult(float(slope), float(intercept), tuple(float(r) for r in res), stderr)


@dataclass(frozen=True, eq=False)
class GrowthResult:
    nus: tuple
    lambda_rates: tuple
    fit: FitResult
    xi_expected: float
    packets: tuple

    @property
    def slope(self) -> float:
        return self.fit.slope

    @property
    def monotone(self) -> bool:
        r = self.lambda_rates
        return all(b >= a for a, b in zip(r, r[1:]))


def growth_from_rates(nus, rates, xi_expected: float = math.nan, packets=()) -> GrowthResult:
    if any(not r > 0 for r in rates):
        raise NumericalError(f"growth rates must be positive to fit an exponent, got {list(rates)}")
    return GrowthResult(tuple(float(n) for n in nus), tuple(float(r) for r in rates),
                        fit_power_law(nus, rates), xi_expected, tuple(packets))


def _check_nus(nus, minimum: int = 3):
    nus = [float(n) for n in nus]
    if len(nus) < minimum:
        raise ContractError(f"nus: at least {minimum} required, got {len(nus)}")
    if any(not n >= 1 for n in nus):
        raise ContractError("nus must be >= 1")
    return sorted(nus)


def growth_experiment(op: ModelOperator, nus: Sequence[float], template: ExperimentTemplate = ExperimentTemplate(),
                      jobs: int = 1) -> GrowthResult:
    """Fit ``Lambda(nu) = [log E_k(t*) - log E_k(0)] / t*`` against ``nu`` on log-log axes."""
    nus = _check_nus(nus)
    packets = _map_packets(_PacketJob(op, template), nus, jobs)
    return growth_from_rates(nus, [pk.lambda_rate for pk in packets], xi_threshold(op).xi, packets)


@dataclass(frozen=True, eq=False)
class BoundednessResult:
    nus: tuple
    log_E_star: tuple
    ratio: float
    factor: float
    monotone_top: bool
    packets: tuple

    @property
    def passed(self) -> bool:
        return self.ratio <= self.factor and not self.monotone_top


def boundedness_experiment(op: ModelOperator, nus: Sequence[float], template: ExperimentTemplate,
                           factor: float = 5.0, jobs: int = 1) -> BoundednessResult:
    nus = _check_nus(nus)
    if op.lower:
        rep = xi_threshold(op)
        if not rep.xi * template.theta < 1.0:
            raise ContractError(
                f"boundedness needs Xi < 1/theta, got Xi = {rep.xi:.6g} and 1/theta = {1 / template.theta:.6g}")
    packets = _map_packets(_PacketJob(op, template), nus, jobs)
    logs = [float(pk.report.log_E[-1]) for pk in packets]
    ratio = float(np.exp(max(logs) - min(logs)))
    top = logs[-3:]
    monotone_top = len(top) == 3 and top[0] < top[1] < top[2]
    return BoundednessResult(tuple(nus), tuple(logs), ratio, float(factor), monotone_top, tuple(packets))


# ---------------------------------------------------------------------------
# datum decay


def g_domain_bound(nu: float, p: int, rho0: float, theta: float, bump_pos: GevreyBump,
                   nodes: int = 24) -> float:
    """Log of a rigorous lower bound for ``|| w^pos_k(x, D) phi_k ||``.

    ``w^pos`` uses the positive-definite bump in x and the plateau bump (equal to
    one on ``|xi - nu| <= nu/8``) in xi.  With every factor of the integrand
    nonnegative, restricting the double integral to ``G_2 x G_1`` gives

        ||w^pos phi_k||^2 >= s^2 / (2 pi)^3 int_{G_2} ( int_{G_1} h_hat(s (xi - eta)) phi_hat(eta) deta )^2 dxi,

    ``s = nu^(p-1)``, with both integrals by Gauss-Legendre quadrature.
    """
    if bump_pos.variant != "pos_fourier":
        raise ContractError("the restricted-domain bound needs the pos_fourier bump")
    s = float(nu) ** (p - 1)
    d = float(nu) ** (-p)
    lo, hi = nu - nu / 8.0, nu + nu / 8.0
    g1 = [(lo, lo + d), (hi - d, hi)]
    g2 = [(lo - d, lo + d), (hi - d, hi + d)]
    t, w = np.polynomial.legendre.leggauss(nodes)

    def gauss(a, b):
        return 0.5 * (b - a) * t + 0.5 * (a + b), 0.5 * (b - a) * w

    eta = np.concatenate([gauss(a, b)[0] for a, b in g1])
    weta = np.concatenate([gauss(a, b)[1] for a, b in g1])
    xi = np.concatenate([gauss(a, b)[0] for a, b in g2])
    wxi = np.concatenate([gauss(a, b)[1] for a, b in g2])
    lphi = log_phi_hat(eta, rho0, theta)
    shift = float(np.max(lphi))
    hh = bump_pos.fourier(s * np.subtract.outer(xi, eta))
    inner = (np.clip(hh, 0.0, None) * np.exp(lphi - shift)) @ weta
    val = s * s / (2 * np.pi) ** 3 * np.sum(wxi * inner ** 2)
    return 0.5 * math.log(val) + shift


def pos_localized_norm(nu: float, p: int, rho0: float, theta: float, grid: Grid,
                       bump_pos: GevreyBump, bump_plateau: GevreyBump) -> float:
    """Log of ``|| h_pos((x - 4s)/s) h((D - nu)/(nu/4)) phi_k ||`` on the grid."""
    s = float(nu) ** (p - 1)
    x = grid.x
    xi = grid.xi
    band = (xi > 0.75 * nu) & (xi < 1.25 * nu)
    lphi = log_phi_hat(xi[band], rho0, theta)
    shift = float(np.max(lphi))
    spec = np.zeros(grid.n_points, dtype=complex)
    spec[band] = (bump_plateau.derivatives((xi[band] - nu) / (0.25 * nu), 0)[0]
                  * np.exp(lphi - shift) * np.exp(-4j * s * xi[band]))
    from .grid import fft_inverse
    v = fft_inverse(grid, spec)
    hx = bump_pos.derivatives((x - 4.0 * s) / s, 0)[0]
    return 0.5 * math.log(grid.spacing * np.sum(np.abs(hx * v) ** 2)) + shift


@dataclass(frozen=True, eq=False)
class DatumDecayResult:
    nus: tuple
    theta: float
    rho0: float
    log_E0: tuple
    fit: FitResult
    g_bounds: tuple
    pos_norms: tuple

    @property
    def slope(self) -> float:
        return self.fit.slope

    @property
    def bounds_hold(self) -> bool:
        return all(b <= e for b, e in zip(self.g_bounds, self.log_E0))


def datum_decay_experiment(nus: Sequence[float], theta: float, rho0: float, p: int = 2,
                           lam: float = 0.5, theta1: float = 3.0, theta_h: float = DEFAULT_THETA_H,
                           cap: Optional[int] = None, pos_check: bool = True) -> DatumDecayResult:
    """Fit ``log(-log E_k(0))`` against ``log nu``; the slope approaches ``1/theta``."""
    nus = _check_nus(nus)
    runs = [make_run(nu, p, lam, theta1, theta, rho0, 0.0, cap if cap is not None else 10 ** 6, theta_h)
            for nu in nus]
    top = max(r.alpha_beta_cap for r in runs)
    bump = make_bump("plateau", theta_h, max(top, 1))
    bump_pos = make_bump("pos_fourier", theta_h, 0) if pos_check else None
    logs, bounds, pos = [], [], []
    for nu, run in zip(nus, runs):
        grid = experiment_grid(nu, p, rho0, theta, cutoff_factor=1.75 * 1.01)
        cut = make_packet_cutoffs(grid, nu, p, bump, run.alpha_beta_cap)
        total, _, _ = datum_energy(run, cut)
        if not total < 0:
            raise NumericalError(f"E_k(0) = exp({total:.4g}) is not below 1; log(-log E) is undefined")
        logs.append(total)
        if pos_check:
            bounds.append(g_domain_bound(nu, p, rho0, theta, bump_pos))
            pos.append(pos_localized_norm(nu, p, rho0, theta, grid, bump_pos, bump))
    fit = fit_power_law(nus, [-v for v in logs])
    return DatumDecayResult(tuple(nus), float(theta), float(rho0), tuple(logs), fit,
                            tuple(bounds), tuple(pos))


# ---------------------------------------------------------------------------
# Gronwall diagnostics


def gronwall_rates(nu: float, p: int, xi: float, lam: float, N_k: int, c1: float, C: float, c: float):
    A = c1 * nu ** xi - C * sum(nu ** (l * lam - p * (l - 1)) for l in range(1, p + 1))
    R = C ** (N_k + 1) * nu ** (C - c * N_k) if C > 0 else 0.0
    return A, R


def gronwall_envelope(run: WavePacketRun, xi: float, log_E0: float, c1: float, C: float = 0.0,
                      c: float = 0.0) -> Callable[[np.ndarray], np.ndarray]:
    """``t -> exp(A_k t) (E_k(0) - t R_k)`` as a function returning natural logs (``-inf`` once negative)."""
    A, R = gronwall_rates(run.nu, run.p, xi, run.lam, run.N_k, c1, C, c)

    def envelope(t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = np.log1p(-t * R * np.exp(-log_E0)) if R > 0 else np.zeros_like(t)
        inner = np.where(np.isnan(inner), -np.inf, inner)
        return A * t + log_E0 + inner

    return envelope


def fit_gronwall(report: EnergyReport, run: WavePacketRun, xi: float, C: float = 1.0, c: float = 1.0):
    """Largest ``c1`` such that the envelope stays below the measured energies."""
    t = report.times[1:]
    logE = report.log_E[1:]
    base = gronwall_envelope(run, xi, report.E0_log, 0.0, C, c)(t)
    # envelope(t) = c1 nu^xi t + base(t) <= log E(t)
    c1 = float(np.min((logE - base) / (t * run.nu ** xi)))
    c1 -= 1e-12 * abs(c1) + 1e-15
    return c1, gronwall_envelope(run, xi, report.E0_log, c1, C, c)
