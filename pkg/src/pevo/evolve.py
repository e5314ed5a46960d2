"""Integrating-factor RK4 time stepping with log-renormalization.

In Fourier variables the equation ``P u = 0`` reads

    d/dt u_hat = -i a_p xi^p u_hat - i F[ sum_j a_{p-j}(x) F^{-1}[xi^{p-j} u_hat] ].

The principal phase is integrated exactly (Lawson form); the lower-order part is
advanced with classical RK4.  Internally the stepper works with raw FFT
coefficients ``V = fft(u)``, in which the phase factors of the continuum transform
cancel, so each stage costs one inverse and one forward FFT per coefficient.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft
import scipy.linalg

from .errors import ContractError, StiffnessError
from .grid import FFT_WORKERS, Field, Grid, Spectrum, fft_forward, fft_inverse, l2_norm
from .operator import ModelOperator, _xi_power, lower_symbol, principal_symbol
from .symbols import dense_matrix

__all__ = [
    "EvolutionState",
    "SolveOptions",
    "Propagator",
    "initial_state",
    "step",
    "solve",
    "oracle_solve",
    "OracleResult",
    "STIFFNESS_LIMIT",
    "ORACLE_LIMIT",
]

STIFFNESS_LIMIT = 0.1
ORACLE_LIMIT = 256
NORM_BAND = (0.5, 2.0)


@dataclass(frozen=True, eq=False)
class EvolutionState:
    """Solution ``exp(log_scale) * field`` at ``time``; the shape is kept as a spectrum."""

    spectrum: Spectrum
    log_scale: float
    time: float

    @property
    def grid(self) -> Grid:
        return self.spectrum.grid

    @cached_property
    def field(self) -> Field:
        return Field(self.grid, fft_inverse(self.grid, self.spectrum.coeffs))

    def norm(self) -> float:
        return float(np.linalg.norm(self.spectrum.coeffs) / math.sqrt(self.grid.length))


def initial_state(u0: Field, normalize: bool = True) -> EvolutionState:
    u0.check_finite()
    coeffs = fft_forward(u0.grid, u0.samples)
    log_scale = 0.0
    if normalize:
        nrm = l2_norm(u0)
        if nrm > 0:
            coeffs = coeffs / nrm
            log_scale = math.log(nrm)
    return EvolutionState(Spectrum(u0.grid, coeffs), log_scale, 0.0)


@dataclass(frozen=True)
class SolveOptions:
    """Time-stepping controls.

    ``dt=None`` picks the largest step allowed by the stiffness limit.
    ``spectral_cutoff`` applies a hard cutoff ``|xi| <= cutoff`` to the
    lower-order symbols (None keeps every represented frequency).
    """

    t_end: float
    dt: Optional[float] = None
    renormalize_every: int = 1
    record_times: Optional[tuple] = None
    spectral_cutoff: Optional[float] = None

    def __post_init__(self):
        if not (np.isfinite(self.t_end) and self.t_end >= 0):
            raise ContractError(f"t_end must be finite and >= 0, got {self.t_end}")
        if self.dt is not None and not self.dt > 0:
            raise ContractError(f"dt must be positive, got {self.dt}")
        if not (isinstance(self.renormalize_every, (int, np.integer)) and self.renormalize_every >= 1):
            raise ContractError("renormalize_every must be an integer >= 1")
        if self.record_times is not None:
            rt = tuple(float(t) for t in self.record_times)
            if any(b < a for a, b in zip(rt, rt[1:])):
                raise ContractError("record_times must be sorted")
            if rt and (rt[0] < 0 or rt[-1] > self.t_end):
                raise ContractError("record_times must lie in [0, t_end]")
            object.__setattr__(self, "record_times", rt)
        if self.spectral_cutoff is not None and not self.spectral_cutoff > 0:
            raise ContractError("spectral_cutoff must be positive")

    def times(self) -> tuple:
        return self.record_times if self.record_times is not None else (0.0, float(self.t_end))


class Propagator:
    """Precomputed profiles of the generator on one grid."""

    def __init__(self, op: ModelOperator, grid: Grid, cutoff: Optional[float] = None):
        self.op = op
        self.grid = grid
        self.phase_rate = op.a_p * grid.xi ** op.p
        # N(V) = fft( sum_j c_j(x) * ifft(b_j * V) ) with c_j = -i a_{p-j}
        self.terms = [(-1j * c.values(grid.x), _xi_power(grid, op.p - c.j, cutoff)) for c in op.lower]
        self.radius = sum(float(np.max(np.abs(c))) * float(np.max(np.abs(b))) for c, b in self.terms)
        self._phase_dt = None

    def _phases(self, dt: float):
        if self._phase_dt != dt:
            self._E = np.exp(-1j * dt * self.phase_rate)
            self._Eh = np.exp(-0.5j * dt * self.phase_rate)
            self._phase_dt = dt
        return self._E, self._Eh

    def max_dt(self) -> float:
        return math.inf if self.radius == 0 else STIFFNESS_LIMIT / self.radius

    def nonlinear(self, V: np.ndarray) -> np.ndarray:
        if not self.terms:
            return np.zeros_like(V)
        acc = None
        for c, b in self.terms:
            w = sfft.ifft(b * V, workers=FFT_WORKERS, overwrite_x=True)
            w *= c
            acc = w if acc is None else acc + w
        return sfft.fft(acc, workers=FFT_WORKERS, overwrite_x=True)

    def advance(self, V: np.ndarray, dt: float) -> np.ndarray:
        E, Eh = self._phases(dt)
        if not self.terms:
            return E * V
        k1 = self.nonlinear(V)
        k2 = self.nonlinear(Eh * (V + 0.5 * dt * k1))
        EhV = Eh * V
        k3 = self.nonlinear(EhV + 0.5 * dt * k2)
        k4 = self.nonlinear(E * V + dt * (Eh * k3))
        k2 += k3
        k2 *= 2.0 * Eh
        k2 += E * k1
        k2 += k4
        k2 *= dt / 6.0
        k2 += E * V
        return k2


def _to_native(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    return grid._sign * coeffs / grid.spacing


def _from_native(grid: Grid, V: np.ndarray) -> np.ndarray:
    return grid.spacing * grid._sign * V


def _native_norm(grid: Grid, V: np.ndarray) -> float:
    return float(np.linalg.norm(V) * math.sqrt(grid.spacing / grid.n_points))


def _check_dt(prop: Propagator, dt: float):
    if dt * prop.radius > STIFFNESS_LIMIT * (1 + 1e-12):
        raise StiffnessError(
            f"dt={dt:.4g} gives dt * rho = {dt * prop.radius:.4g} > {STIFFNESS_LIMIT}; "
            f"use dt <= {prop.max_dt():.4g}")


class _Marcher:
    def __init__(self, prop: Propagator, state: EvolutionState, renormalize_every: int):
        self.prop = prop
        self.grid = state.grid
        self.V = _to_native(self.grid, state.spectrum.coeffs)
        self.log_scale = float(state.log_scale)
        self.time = float(state.time)
        self.every = renormalize_every
        self.count = 0

    def run(self, dt: float, n_steps: int):
        for _ in range(n_steps):
            self.V = self.prop.advance(self.V, dt)
            self.time += dt
            self.count += 1
            if self.count % self.every == 0:
                self._renormalize()

    def _renormalize(self, force: bool = False):
        nrm = _native_norm(self.grid, self.V)
        if not np.isfinite(nrm):
            raise StiffnessError(
                f"non-finite solution at t={self.time:.6g}; reduce dt or renormalize more often")
        if nrm == 0:
            return
        if force or not NORM_BAND[0] <= nrm <= NORM_BAND[1]:
            self.V /= nrm
            self.log_scale += math.log(nrm)

    def state(self, time: Optional[float] = None) -> EvolutionState:
        self._renormalize()
        t = self.time if time is None else time
        return EvolutionState(Spectrum(self.grid, _from_native(self.grid, self.V)), self.log_scale, t)


def step(state: EvolutionState, op: ModelOperator, opts: SolveOptions) -> EvolutionState:
    prop = Propagator(op, state.grid, opts.spectral_cutoff)
    dt = opts.dt if opts.dt is not None else prop.max_dt()
    if not np.isfinite(dt):
        raise ContractError("dt must be given when the operator has no lower-order part")
    _check_dt(prop, dt)
    m = _Marcher(prop, state, 1)
    m.run(dt, 1)
    return m.state()


def solve(op: ModelOperator, u0: Field, opts: SolveOptions, normalize: bool = True) -> list:
    """March ``u0`` and return the states at ``opts.record_times``.

    Between consecutive record times the step is shrunk to land on them exactly.
    """
    state = initial_state(u0, normalize=normalize)
    prop = Propagator(op, u0.grid, opts.spectral_cutoff)
    dt = opts.dt if opts.dt is not None else prop.max_dt()
    if np.isfinite(dt):
        _check_dt(prop, dt)
    m = _Marcher(prop, state, opts.renormalize_every)
    out = []
    for t in opts.times():
        gap = t - m.time
        if gap > 0:
            if np.isfinite(dt):
                n_steps = max(1, math.ceil(gap / dt - 1e-9))
                m.run(gap / n_steps, n_steps)
            else:
                m.run(gap, 1)
            m.time = t
        out.append(m.state(t))
    return out


# ---------------------------------------------------------------------------
# dense oracle


@dataclass(frozen=True, eq=False)
class OracleResult:
    field: Field
    log_scale: float
    error_estimate: float


def generator_matrix(op: ModelOperator, grid: Grid, cutoff: Optional[float] = None) -> np.ndarray:
    """Dense ``G`` with ``du/dt = G u`` on the grid samples."""
    if grid.n_points > ORACLE_LIMIT:
        raise ContractError(f"oracle is limited to {ORACLE_LIMIT} points, grid has {grid.n_points}")
    M = dense_matrix(principal_symbol(op, grid))
    if op.lower:
        M = M + dense_matrix(lower_symbol(op, grid, cutoff))
    return -1j * M


def oracle_solve(op: ModelOperator, u0: Field, t: float, cutoff: Optional[float] = None) -> OracleResult:
    """Reference solution ``expm(t G) u0``, certified against two half steps."""
    G = generator_matrix(op, u0.grid, cutoff)
    full = scipy.linalg.expm(t * G) @ u0.samples
    half = scipy.linalg.expm(0.5 * t * G)
    halved = half @ (half @ u0.samples)
    nrm = float(np.sqrt(u0.grid.spacing) * np.linalg.norm(full))
    err = float(np.linalg.norm(full - halved) / max(np.linalg.norm(full), 1e-300))
    if nrm == 0:
        return OracleResult(Field(u0.grid, full), -math.inf, err)
    return OracleResult(Field(u0.grid, full / nrm), math.log(nrm), err)
