"""The model p-evolution operator, its Gevrey threshold and the I/J symbol split.

The operator is

    P = D_t + a_p D_x^p + sum_j a_{p-j}(x) D_x^{p-j},   D = -i d/dx,

with model lower-order coefficients ``a_{p-j}(x) = re_j(x) + i A_j <x>^(-sigma_j)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, NumericalError
from .grid import Grid
from .symbols import PacketCutoffs, SampledSymbol

__all__ = [
    "LowerCoeff",
    "ModelOperator",
    "ThresholdTerm",
    "ThresholdReport",
    "xi_threshold",
    "c_lower",
    "lower_symbol",
    "principal_symbol",
    "DecompositionChecks",
    "decompose_IJ",
    "NOT_WP",
    "RESTRICTS",
    "NO_EFFECT",
]

NOT_WP = "not_wp"
RESTRICTS = "restricts"
NO_EFFECT = "no_effect"


@dataclass(frozen=True)
class LowerCoeff:
    """Coefficient of ``D^{p-j}`` with imaginary part ``A <x>^(-sigma)``."""

    j: int
    sigma: float
    A: float = 1.0
    real_part: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        if not isinstance(self.j, (int, np.integer)) or self.j < 1:
            raise ContractError(f"j must be a positive integer, got {self.j!r}")
        if not 0.0 <= self.sigma <= 1.0:
            raise ContractError(f"sigma must lie in [0, 1], got {self.sigma}")
        if not self.A > 0:
            raise ContractError(f"amplitude A must be positive, got {self.A}")

    def imag(self, x) -> np.ndarray:
        return self.A * (1.0 + np.square(x)) ** (-0.5 * self.sigma)

    def values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        re = np.zeros_like(x) if self.real_part is None else np.asarray(self.real_part(x), dtype=float)
        return re + 1j * self.imag(x)

    def log_derivative_bound(self, x) -> float:
        """Smallest ``C`` with ``|a'(x)| <= C <x>^(-1) |a(x)|`` for the imaginary model on ``x``."""
        x = np.asarray(x, dtype=float)
        # d/dx <x>^(-s) = -s x <x>^(-s-2), so the ratio is s |x| / <x> <= s
        ratio = self.sigma * np.abs(x) / np.sqrt(1.0 + x * x)
        return float(np.max(ratio)) if x.size else 0.0


@dataclass(frozen=True)
class ModelOperator:
    p: int
    a_p: float = 1.0
    lower: tuple = ()

    def __post_init__(self):
        if not isinstance(self.p, (int, np.integer)) or self.p < 2:
            raise ContractError(f"p must be an integer >= 2, got {self.p!r}")
        if self.a_p == 0 or not np.isfinite(self.a_p):
            raise ContractError("a_p must be a nonzero finite constant")
        lower = tuple(self.lower)
        js = [c.j for c in lower]
        if len(set(js)) != len(js):
            raise ContractError(f"lower-order coefficients need distinct j, got {js}")
        for c in lower:
            if c.j > self.p:
                raise ContractError(f"j={c.j} exceeds p={self.p}")
        object.__setattr__(self, "lower", tuple(sorted(lower, key=lambda c: c.j)))

    def coeff(self, j: int) -> LowerCoeff:
        for c in self.lower:
            if c.j == j:
                return c
        raise ContractError(f"operator has no coefficient with j={j}")

    @property
    def is_real(self) -> bool:
        return not self.lower


# ---------------------------------------------------------------------------
# threshold


@dataclass(frozen=True)
class ThresholdTerm:
    j: int
    sigma: float
    value: float
    classification: str
    theta_bound: Optional[float]


@dataclass(frozen=True)
class ThresholdReport:
    xi: float
    per_j: tuple
    notes: tuple = ()

    @property
    def classification(self) -> str:
        classes = {t.classification for t in self.per_j}
        for c in (NOT_WP, RESTRICTS):
            if c in classes:
                return c
        return NO_EFFECT

    @property
    def theta_bound(self) -> Optional[float]:
        """Largest admissible Gevrey index, ``1/xi`` (None when there is no restriction)."""
        if self.classification == NOT_WP:
            return 1.0
        if self.xi <= 0:
            return None
        return 1.0 / self.xi

    def admits(self, theta: float) -> bool:
        """Necessary condition ``xi <= 1/theta`` for well-posedness in the Gevrey class ``theta``."""
        return self.xi * theta <= 1.0


def _classify(p: int, j: int, sigma: float):
    value = (p - 1) * (1.0 - sigma) - j + 1
    if sigma <= (p - 1 - j) / (p - 1):
        return value, NOT_WP, None
    if sigma >= (p - j) / (p - 1):
        return value, NO_EFFECT, None
    return value, RESTRICTS, 1.0 / value


def xi_threshold(op: ModelOperator) -> ThresholdReport:
    terms = []
    for c in op.lower:
        if c.j >= op.p:
            continue  # zeroth-order coefficient: bounded perturbation
        value, cls, bound = _classify(op.p, c.j, c.sigma)
        terms.append(ThresholdTerm(c.j, c.sigma, value, cls, bound))
    if not terms:
        raise ContractError("xi_threshold needs at least one coefficient with j < p")
    notes = []
    for t in terms:
        if t.j == op.p - 1 and t.value > 0:
            notes.append(
                f"j={t.j} is a first-order coefficient: it restricts theta <= {1 / t.value:.6g} "
                "by the per-coefficient rule, even though first-order terms are often described "
                "as harmless for every theta > 1")
    return ThresholdReport(max(t.value for t in terms), tuple(terms), tuple(notes))


def c_lower(j: int, p: int, A: float, sigma: float) -> float:
    """Positive lower-bound constant ``A 7^(-sigma) / 4^(p-j)``."""
    if not (1 <= j <= p and A > 0 and 0 <= sigma <= 1):
        raise ContractError(f"invalid arguments j={j}, p={p}, A={A}, sigma={sigma}")
    return A * 7.0 ** (-sigma) / 4.0 ** (p - j)


# ---------------------------------------------------------------------------
# symbols


def _xi_power(grid: Grid, k: int, cutoff: Optional[float]) -> np.ndarray:
    xi = grid.xi
    out = xi ** k if k > 0 else np.ones_like(xi)
    if cutoff is not None:
        out = np.where(np.abs(xi) <= cutoff, out, 0.0)
        out[grid.nyquist_index] = 0.0
    return out


def principal_symbol(op: ModelOperator, grid: Grid) -> SampledSymbol:
    return SampledSymbol.from_profiles(grid, 1.0, op.a_p * grid.xi ** op.p)


def lower_symbol(op: ModelOperator, grid: Grid, cutoff: Optional[float] = None) -> SampledSymbol:
    """``sum_j a_{p-j}(x) xi^{p-j}``, optionally with a hard cutoff ``|xi| <= cutoff``."""
    if not op.lower:
        return SampledSymbol.from_profiles(grid, 0.0, 0.0)
    terms = tuple((c.values(grid.x), _xi_power(grid, op.p - c.j, cutoff)) for c in op.lower)
    return SampledSymbol(grid, terms)


@dataclass(frozen=True)
class DecompositionChecks:
    I_nonneg: bool
    I_min: float
    J_disjoint: bool
    identity_error: float
    xi_lower_bound: bool


def _check_nodes(cutoffs: PacketCutoffs, budget: int = 1536):
    """Node subsets in x and xi: the cutoff supports densely, the rest strided."""
    g = cutoffs.grid
    out = []
    for vals, lo, hi in ((g.x, 0.0, 8.0 * cutoffs.scale), (g.xi, 0.0, 2.0 * cutoffs.nu)):
        inside = np.nonzero((vals >= lo) & (vals <= hi))[0]
        if inside.size > budget:
            inside = inside[np.linspace(0, inside.size - 1, budget).astype(int)]
        stride = np.arange(0, g.n_points, max(1, g.n_points // 256))
        out.append(np.unique(np.concatenate([inside, stride])))
    return out


def decompose_IJ(op: ModelOperator, cutoffs: PacketCutoffs, j: int):
    """Split ``Im a_{p-j}(x) xi^{p-j}`` into ``K + I + J`` around the packet.

    ``K = c_{p-j} <nu^{p-1}>^(-sigma) nu^{p-j}`` and
    ``I = (A <x>^(-sigma) xi^{p-j} - K) psi chi``, ``J = (Im a xi^{p-j} - K)(1 - psi chi)``.
    """
    c = op.coeff(j)
    if j >= op.p:
        raise ContractError("the split is defined for j < p")
    g = cutoffs.grid
    nu, s, k = cutoffs.nu, cutoffs.scale, op.p - j
    K = c_lower(j, op.p, c.A, c.sigma) * (1.0 + s * s) ** (-0.5 * c.sigma) * nu ** k
    im_a = c.imag(g.x)  # equals the assumed lower bound A <x>^(-sigma) for the model
    lower_bound = im_a
    xik = g.xi ** k
    psi, chi = cutoffs.psi, cutoffs.chi
    I_sym = SampledSymbol(g, ((lower_bound * psi, xik * chi), (-K * psi, chi)))
    J_sym = SampledSymbol(g, ((im_a, xik), (np.full(g.n_points, -K), np.ones(g.n_points)),
                              (-im_a * psi, xik * chi), (K * psi, chi)))

    ix, ixi = _check_nodes(cutoffs)
    I_vals = I_sym.evaluate(ix, ixi)
    J_vals = J_sym.evaluate(ix, ixi)
    target = np.multiply.outer(im_a[ix], xik[ixi])
    scale = max(1.0, float(np.max(np.abs(target))))
    identity_error = float(np.max(np.abs(K + I_vals + J_vals - target))) / scale
    I_min = float(np.min(I_vals.real))

    # J carries the factor (1 - psi chi), which vanishes exactly on every supp w_k^(ab).
    # With 0 <= psi, chi <= 1 the product is exactly one iff both factors are, so the
    # check separates into x and xi.
    xs, xis = cutoffs.x_slice, cutoffs.xi_slice
    x_on = np.any(cutoffs.x_profiles != 0, axis=0)
    xi_on = np.any(cutoffs.xi_profiles != 0, axis=0)
    J_disjoint = bool(np.all(psi[xs][x_on] == 1.0) and np.all(chi[xis][xi_on] == 1.0)
                      and np.max(psi) <= 1.0 and np.max(chi) <= 1.0)

    pc = np.multiply.outer(psi[ix], chi[ixi]) > 0
    xi_ok = bool(np.all(np.broadcast_to(xik[ixi], pc.shape)[pc] >= nu ** k / 4.0 ** k * (1 - 1e-14)))

    checks = DecompositionChecks(I_min >= -1e-12, I_min, J_disjoint, identity_error, xi_ok)
    if identity_error > 1e-12:
        raise NumericalError(f"I/J reconstruction identity fails: error {identity_error:.3e}")
    return I_sym, J_sym, checks
