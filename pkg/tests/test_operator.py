import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pevo.errors import ContractError
from pevo.gevrey import make_bump
from pevo.grid import Field, Grid
from pevo.operator import (NO_EFFECT, NOT_WP, RESTRICTS, LowerCoeff, ModelOperator, c_lower,
                           decompose_IJ, lower_symbol, principal_symbol, xi_threshold)
from pevo.symbols import apply, make_packet_cutoffs


def op(p, *coeffs):
    return ModelOperator(p, 1.0, tuple(LowerCoeff(j, s) for j, s in coeffs))


@pytest.mark.parametrize("sigma", [0.0, 0.25, 0.5, 0.9, 1.0])
def test_threshold_p2(sigma):
    rep = xi_threshold(op(2, (1, sigma)))
    assert abs(rep.xi - (1 - sigma)) <= 1e-12
    expected = {0.0: NOT_WP, 1.0: NO_EFFECT}.get(sigma, RESTRICTS)
    assert rep.classification == expected


@pytest.mark.parametrize("sigma", [0.0, 0.3, 0.5])
def test_threshold_p3_not_wp(sigma):
    rep = xi_threshold(op(3, (1, sigma)))
    assert rep.classification == NOT_WP
    assert rep.theta_bound == 1.0


@pytest.mark.parametrize("sigma", [0.51, 0.6, 0.75, 0.99])
def test_threshold_p3_restricts(sigma):
    rep = xi_threshold(op(3, (1, sigma)))
    assert rep.classification == RESTRICTS
    assert abs(rep.xi - 2 * (1 - sigma)) <= 1e-12
    assert rep.theta_bound == pytest.approx(1 / (2 * (1 - sigma)))
    assert rep.admits(rep.theta_bound) and not rep.admits(rep.theta_bound * 1.01)


def test_threshold_takes_worst_term():
    rep = xi_threshold(op(3, (1, 0.9), (2, 0.2)))
    assert rep.xi == pytest.approx(max(2 * 0.1, 2 * 0.8 - 1))
    assert len(rep.per_j) == 2


def test_first_order_note():
    rep = xi_threshold(op(3, (2, 0.0)))
    assert rep.notes and "j=2" in rep.notes[0]
    assert not xi_threshold(op(3, (1, 0.8))).notes


def test_zeroth_order_ignored():
    rep = xi_threshold(op(2, (1, 0.5), (2, 0.0)))
    assert [t.j for t in rep.per_j] == [1]
    with pytest.raises(ContractError):
        xi_threshold(op(2, (2, 0.0)))


@settings(max_examples=200, deadline=None)
@given(p=st.integers(2, 7), data=st.data())
def test_trichotomy_boundaries(p, data):
    j = data.draw(st.integers(1, p - 1))
    lo, hi = (p - 1 - j) / (p - 1), (p - j) / (p - 1)
    sigma = data.draw(st.floats(0, 1))
    rep = xi_threshold(op(p, (j, sigma)))
    if sigma <= lo:
        expected = NOT_WP
    elif sigma >= hi:
        expected = NO_EFFECT
    else:
        expected = RESTRICTS
    assert rep.classification == expected
    assert abs(rep.xi - ((p - 1) * (1 - sigma) - j + 1)) <= 1e-12
    if expected == RESTRICTS:
        assert 0 < rep.xi <= 1


@pytest.mark.parametrize("p", [2, 3, 4, 5])
def test_boundaries_exact(p):
    for j in range(1, p):
        lo, hi = (p - 1 - j) / (p - 1), (p - j) / (p - 1)
        assert xi_threshold(op(p, (j, lo))).classification == NOT_WP
        assert xi_threshold(op(p, (j, hi))).classification == NO_EFFECT
        assert xi_threshold(op(p, (j, 0.5 * (lo + hi)))).classification == RESTRICTS


def test_operator_validation():
    with pytest.raises(ContractError):
        ModelOperator(1)
    with pytest.raises(ContractError):
        ModelOperator(2, 0.0)
    with pytest.raises(ContractError):
        ModelOperator(2, 1.0, (LowerCoeff(1, 0.5), LowerCoeff(1, 0.2)))
    with pytest.raises(ContractError):
        ModelOperator(2, 1.0, (LowerCoeff(3, 0.5),))
    with pytest.raises(ContractError):
        LowerCoeff(1, 1.5)
    with pytest.raises(ContractError):
        LowerCoeff(1, 0.5, A=0.0)
    m = ModelOperator(3, 1.0, (LowerCoeff(2, 0.1), LowerCoeff(1, 0.5)))
    assert [c.j for c in m.lower] == [1, 2]
    assert ModelOperator(2).is_real and not m.is_real


def test_c_lower():
    assert c_lower(1, 2, 1.0, 0.5) == pytest.approx(7 ** -0.5 / 4)
    assert c_lower(2, 3, 2.0, 0.0) == pytest.approx(0.5)
    with pytest.raises(ContractError):
        c_lower(0, 2, 1.0, 0.5)


def test_coefficient_model():
    c = LowerCoeff(1, 0.5, A=2.0, real_part=np.cos)
    x = np.array([0.0, 3.0])
    assert np.allclose(c.values(x), np.cos(x) + 2j * (1 + x ** 2) ** -0.25)
    xs = np.linspace(-50, 50, 1001)
    d = np.gradient(c.imag(xs), xs)
    bound = c.log_derivative_bound(xs)
    assert np.all(np.abs(d) <= bound * c.imag(xs) / np.sqrt(1 + xs ** 2) * 1.01 + 1e-6)


def test_symbols_act_as_derivatives():
    g = Grid(128, 2 * np.pi)
    k = 3
    wave = Field(g, np.exp(1j * k * g.x))
    m = ModelOperator(3, 2.0, (LowerCoeff(1, 0.5),))
    out = apply(principal_symbol(m, g), wave).samples
    assert np.allclose(out, 2.0 * k ** 3 * wave.samples, atol=1e-9)
    out = apply(lower_symbol(m, g), wave).samples
    assert np.allclose(out, m.coeff(1).values(g.x) * k ** 2 * wave.samples, atol=1e-10)
    # with a cutoff below k the lower-order part annihilates the wave
    assert np.allclose(apply(lower_symbol(m, g, cutoff=2.0), wave).samples, 0.0, atol=1e-12)


@pytest.fixture(scope="module")
def bump():
    return make_bump("plateau", max_derivative_order=4, fine_points=2 ** 14)


@pytest.mark.parametrize("p,j,sigma", [(2, 1, 0.5), (3, 1, 0.75), (3, 2, 0.2)])
def test_decompose_IJ(bump, p, j, sigma):
    nu = 8.0
    s = nu ** (p - 1)
    L = 16 * s
    n = int(2 ** np.ceil(np.log2(max(L * 2 * nu / np.pi, 64 * L / s))))
    g = Grid(n, L)
    cut = make_packet_cutoffs(g, nu, p, bump, 2)
    m = op(p, (j, sigma))
    I_sym, J_sym, checks = decompose_IJ(m, cut, j)
    assert checks.I_nonneg and checks.I_min >= -1e-12
    assert checks.J_disjoint and checks.xi_lower_bound
    assert checks.identity_error <= 1e-12
    # J vanishes on the packet box
    xs, xis = cut.x_slice, cut.xi_slice
    J_box = J_sym.evaluate(np.arange(g.n_points)[xs], np.arange(g.n_points)[xis])
    assert np.max(np.abs(J_box)) <= 1e-12 * nu ** (p - j)
