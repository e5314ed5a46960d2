import math
import warnings

import numpy as np
import pytest
import mpmath

from pevo.errors import ContractError, SizingError, WeightOverflowError
from pevo.gevrey import (DatumSpec, GevreyOverflowWarning, GevreyParams, check_datum_fits, gevrey_norm,
                         gevrey_weight, make_bump, make_phi, phi_spectrum)
from pevo.grid import Field, Grid, fft_forward, l2_norm


@pytest.fixture(scope="module")
def plateau():
    return make_bump("plateau", 1.1, 20)


@pytest.fixture(scope="module")
def pos():
    return make_bump("pos_fourier", 1.1, 4)


def test_weight_examples():
    assert gevrey_weight(0.0, GevreyParams(2, 1)) == pytest.approx(math.e)
    assert gevrey_weight(0.0, GevreyParams(3, 0.3)) == pytest.approx(math.exp(0.3))
    assert gevrey_weight(3.0, GevreyParams(2, 0.5)) == pytest.approx(math.exp(0.5 * 10 ** 0.25))


def test_weight_overflow_saturates():
    with pytest.warns(GevreyOverflowWarning):
        assert gevrey_weight(1e12, GevreyParams(1.5, 1.0)) == math.inf


def test_params_validated():
    with pytest.raises(ContractError):
        GevreyParams(1.0, 1.0)
    with pytest.raises(ContractError):
        GevreyParams(2.0, 0.0)


def test_norm_zero_and_small_rho_limit():
    g = Grid(256, 20.0)
    assert gevrey_norm(Field(g, np.zeros(256)), GevreyParams(2, 1)) == 0.0
    f = Field(g, np.exp(-g.x ** 2))
    assert gevrey_norm(f, GevreyParams(2, 1e-12)) == pytest.approx(l2_norm(f), rel=1e-10)


def test_norm_monotone_in_rho():
    rng = np.random.default_rng(4)
    g = Grid(128, 10.0)
    for _ in range(5):
        f = Field(g, rng.normal(size=128))
        vals = [gevrey_norm(f, GevreyParams(2.0, r)) for r in (0.1, 0.5, 1.0, 2.0)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_norm_overflow_names_frequency():
    g = Grid(1024, 10.0)
    f = Field(g, np.exp(-g.x ** 2))
    with pytest.raises(WeightOverflowError) as exc:
        gevrey_norm(f, GevreyParams(1.01, 50.0))
    assert exc.value.xi > 0


def _phi_quadrature(weight_rho, rho0, theta):
    # (1/2pi) int exp(2 rho <xi>^(1/theta)) exp(-4 rho0 <xi>^(1/theta)) dxi
    mpmath.mp.dps = 30
    c = 2 * weight_rho - 4 * rho0
    f = lambda x: mpmath.exp(c * (1 + x * x) ** (mpmath.mpf(0.5) / theta))
    return float(2 * mpmath.quad(f, [0, 1, 10, 100, 1000, 10000, mpmath.inf]) / (2 * mpmath.pi))


def test_phi_norm_matches_quadrature():
    g = Grid(2 ** 15, 200.0)
    phi = make_phi(DatumSpec(1.0, 2.0), g)
    assert l2_norm(phi) ** 2 == pytest.approx(_phi_quadrature(0.0, 1.0, 2.0), rel=1e-6)
    assert gevrey_norm(phi, GevreyParams(2.0, 1.0)) ** 2 == pytest.approx(_phi_quadrature(1.0, 1.0, 2.0), rel=1e-6)


def test_phi_even_and_positive_at_origin():
    g = Grid(2048, 100.0)
    phi = make_phi(DatumSpec(1.0, 2.0), g)
    s = phi.samples
    assert s[g.n_points // 2].real > 0
    # x_m -> -x_m maps index m to n - m
    mirrored = np.roll(s[::-1], 1)
    assert np.max(np.abs(s - mirrored)) < 1e-12 * np.max(np.abs(s))
    assert np.max(np.abs(s.imag)) < 1e-12 * np.max(np.abs(s))


def test_translate_preserves_norm_and_is_real():
    g = Grid(4096, 200.0)
    c = 40 * g.spacing
    phi = make_phi(DatumSpec(1.0, 2.0), g)
    phik = make_phi(DatumSpec(1.0, 2.0, c), g)
    assert l2_norm(phik) == pytest.approx(l2_norm(phi), rel=1e-13)
    assert np.max(np.abs(phik.samples.imag)) < 1e-12 * np.max(np.abs(phik.samples))


def test_datum_tail_check():
    spec = DatumSpec(1.0, 2.0, center=30.0)
    with pytest.raises(SizingError) as exc:
        check_datum_fits(spec, Grid(1024, 64.0))
    assert exc.value.required_length > 64.0
    check_datum_fits(spec, Grid(1024, exc.value.required_length * 1.01))


def test_membership_trend():
    # gevrey_norm stays put for rho < 2 rho0 and keeps growing with refinement for rho > 2 rho0
    def norms(rho):
        out = []
        for n in (512, 2048, 8192):
            g = Grid(n, 100.0)
            out.append(gevrey_norm(make_phi(DatumSpec(0.5, 2.0), g, check_tail=False), GevreyParams(2.0, rho)))
        return out
    inside = norms(0.2)
    limit = _phi_quadrature(0.2, 0.5, 2.0) ** 0.5
    assert abs(inside[2] - limit) < abs(inside[1] - limit) < abs(inside[0] - limit)
    assert inside[2] == pytest.approx(limit, rel=1e-4)
    outside = norms(1.5)
    assert outside[2] > 10 * outside[1] > 100 * outside[0]


def test_plateau_invariants(plateau):
    x = np.linspace(-1.2, 1.2, 24001)
    h = plateau(x)
    assert plateau(np.array([0.0, 0.25, -0.25, 0.5, -0.5])) == pytest.approx(1.0, abs=1e-12)
    assert np.all(h[np.abs(x) >= 1] == 0)
    assert np.all((h >= -1e-15) & (h <= 1 + 1e-12))
    assert np.allclose(h, h[::-1], atol=1e-13)


def test_plateau_first_derivative(plateau):
    x = np.linspace(-1, 1, 20001)
    d1 = plateau(x, 1)
    assert np.allclose(d1, -d1[::-1], atol=1e-12)
    peak = abs(x[np.argmax(np.abs(d1))])
    assert 0.5 < peak < 1.0
    # agrees with a spectral derivative of the values at low order
    g = Grid(2 ** 14, 2.5)
    vals = plateau(g.x)
    spec = np.fft.ifft(1j * g.xi * np.fft.fft(vals)).real
    assert np.max(np.abs(spec - plateau(g.x, 1))) < 1e-6 * np.max(np.abs(spec))


def test_plateau_derivatives_against_finite_differences(plateau):
    x = np.array([0.6, 0.7, 0.8, -0.65])
    d = plateau.derivatives(x, 3)
    eps = 1e-5
    for a in range(3):
        fd = (plateau.derivatives(x + eps, a)[a] - plateau.derivatives(x - eps, a)[a]) / (2 * eps)
        assert np.allclose(fd, d[a + 1], rtol=1e-6, atol=1e-8 * np.max(np.abs(d[a + 1])))


def test_plateau_derivative_growth(plateau):
    sups = plateau.sup_derivatives()
    alpha = np.arange(len(sups))
    lg = np.array([math.lgamma(a + 1) for a in alpha])
    # Gevrey class theta_h: sup|h^(a)| <= C^(a+1) (a!)^theta_h with C bounded in a
    logc = (np.log(sups) - plateau.theta_h * lg) / (alpha + 1)
    assert np.all(np.isfinite(logc))
    assert np.max(logc) < math.log(25.0)
    # C(a) levels off rather than growing with the order
    assert logc[-1] - logc[len(logc) // 2] < 0.5


def test_pos_fourier_invariants(pos):
    g = Grid(4096, 40.0)
    hh = pos.fourier(g.xi)
    assert np.min(hh) >= -1e-12
    assert pos.fourier(0.0) > 0
    # cross-check the transform against direct quadrature of the samples
    xs = np.linspace(-1, 1, 8001)
    direct = np.trapezoid(pos(xs), xs)
    assert pos.fourier(0.0) == pytest.approx(direct, rel=1e-6)
    x = np.linspace(-1, 1, 2001)
    assert np.allclose(pos(x), pos(-x), atol=1e-13)
    d1 = pos(x, 1)
    assert np.allclose(d1, -d1[::-1], atol=1e-10)
    assert pos(np.array([0.0]))[0] == pytest.approx(1.0)


def test_bump_errors():
    with pytest.raises(ContractError):
        make_bump("other")
    with pytest.raises(ContractError):
        make_bump("plateau", 1.0)
    with pytest.raises(ContractError):
        make_bump("plateau", 1.1, 40)
