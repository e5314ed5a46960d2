import math

import mpmath
import numpy as np
import pytest

from pevo.energy import (ExperimentTemplate, assemble_energy, bicharacteristic, compute_energy,
                         compute_Nk, datum_energy, experiment_grid, fit_gronwall, fit_power_law,
                         g_domain_bound, growth_from_rates, gronwall_envelope, log_norm_table,
                         make_run, predicted_rate, run_packet, transport_limit)
from pevo.errors import ContractError, NumericalError, TruncationError
from pevo.evolve import SolveOptions, initial_state, solve
from pevo.gevrey import DatumSpec, make_bump, make_phi
from pevo.grid import Field, Grid, l2_norm
from pevo.operator import LowerCoeff, ModelOperator
from pevo.symbols import SampledSymbol, apply, make_packet_cutoffs


@pytest.fixture(scope="module")
def bump():
    return make_bump("plateau", max_derivative_order=4, fine_points=2 ** 14)


def test_compute_Nk():
    assert compute_Nk(1024, 0.5, 1.1) == 23
    assert compute_Nk(16, 0.5, 1.0) == 4
    assert compute_Nk(64, 0.5, 3.0) == 2
    assert compute_Nk(1, 0.5, 3.0) == 1
    with pytest.raises(ContractError):
        compute_Nk(0.5, 0.5, 1.0)


def test_bicharacteristic():
    x, xi = bicharacteristic(1.0, 3.0, 0.5, 3, 2.0)
    assert x == pytest.approx(1.0 + 3 * 2.0 * 0.5 * 9)
    assert xi == 3.0


def test_run_validation():
    run = make_run(64, 2, cap=1)
    assert run.N_k == 2 and run.alpha_beta_cap == 1 and run.truncated
    with pytest.raises(ContractError):
        make_run(64, 2, theta1=1.05)
    with pytest.raises(ContractError):
        make_run(64, 2, lam=1.5)


def _oracle_log_norms(u, cut, cap):
    """``log ||w^(ab)(x, D) u||`` by plain quantization on the full grid."""
    out = np.empty((cap + 1, cap + 1))
    for a in range(cap + 1):
        for b in range(cap + 1):
            out[a, b] = math.log(l2_norm(apply(cut.w_symbol(a, b), u)))
    return out


@pytest.mark.parametrize("nu,n,L", [(4.0, 512, 128.0), (64.0, 2 ** 16, 1024.0)])
def test_log_norms_match_quantization(bump, nu, n, L):
    g = Grid(n, L)
    cut = make_packet_cutoffs(g, nu, 2, bump, 3)
    u = make_phi(DatumSpec(0.5, 2.0, cut.center), g)
    band = initial_state(u, normalize=False).spectrum.coeffs[cut.xi_slice]
    ref = _oracle_log_norms(u, cut, 3)
    for decimate in (False, True):
        got = log_norm_table(band, cut, 3, decimate=decimate)
        # relative agreement on the terms that matter, absolute round-off on the rest
        big = ref > ref.max() - 10
        assert np.allclose(got[big], ref[big], rtol=0, atol=1e-9)
        assert np.allclose(np.exp(got - ref.max()), np.exp(ref - ref.max()), rtol=0, atol=1e-12)


def test_assemble_energy_against_plain_sum():
    rng = np.random.default_rng(5)
    table = rng.normal(size=(4, 4)) * 3
    total, terms, tail = assemble_energy(table, 1.5, 2.0)
    mpmath.mp.dps = 40
    lf = [math.lgamma(k + 1) for k in range(4)]
    direct = mpmath.log(mpmath.fsum(mpmath.exp(table[a, b] + 1.5 - 2.0 * (lf[a] + lf[b]))
                                    for a in range(4) for b in range(4)))
    assert total == pytest.approx(float(direct), abs=1e-12)
    # symmetric relabelling of alpha and beta leaves the total unchanged
    assert assemble_energy(table.T, 1.5, 2.0)[0] == pytest.approx(total, abs=1e-13)
    shell = np.exp(np.concatenate([terms[3, :], terms[:3, 3]]) - total).sum()
    assert tail == pytest.approx(shell, rel=1e-12)


def test_zero_solution_has_no_energy(bump):
    g = Grid(128, 40.0)
    cut = make_packet_cutoffs(g, 4.0, 2, bump, 1)
    run = make_run(4.0, 2, cap=1)
    rep = compute_energy([initial_state(Field(g, np.zeros(128)))], cut, run)
    assert rep.log_E[0] == -math.inf


def test_truncation_certificate(bump):
    nu = 64.0
    run = make_run(nu, 2, lam=0.9, theta1=1.2, theta=2.0, cap=1)
    assert run.truncated
    g = experiment_grid(nu, 2, 1.0, 2.0, cutoff_factor=1.8)
    cut = make_packet_cutoffs(g, nu, 2, bump, 1)
    with pytest.raises(TruncationError):
        datum_energy(run, cut)


def test_datum_energy_refinement(bump):
    nu = 16.0
    run = make_run(nu, 2, cap=4)
    base = experiment_grid(nu, 2, 1.0, 2.0, cutoff_factor=2.0)
    vals = []
    for g in (base, Grid(2 * base.n_points, base.length), Grid(2 * base.n_points, 2 * base.length)):
        cut = make_packet_cutoffs(g, nu, 2, bump, run.alpha_beta_cap)
        vals.append(datum_energy(run, cut)[0])
    assert max(vals) - min(vals) < 1e-6


def test_datum_energy_matches_sampled_datum(bump):
    nu = 16.0
    run = make_run(nu, 2, cap=4)
    g = experiment_grid(nu, 2, 1.0, 2.0)
    cut = make_packet_cutoffs(g, nu, 2, bump, run.alpha_beta_cap)
    u0 = make_phi(DatumSpec(1.0, 2.0, cut.center), g)
    rep = compute_energy([initial_state(u0)], cut, run)
    assert rep.log_E[0] == pytest.approx(datum_energy(run, cut)[0], abs=1e-6)


def test_g_domain_bound_below_localized_norm(bump):
    pos = make_bump("pos_fourier", max_derivative_order=0, fine_points=2 ** 14)
    from pevo.energy import pos_localized_norm
    for nu in (16.0, 32.0):
        g = experiment_grid(nu, 2, 1.0, 2.0, cutoff_factor=1.8)
        lb = g_domain_bound(nu, 2, 1.0, 2.0, pos)
        assert lb <= pos_localized_norm(nu, 2, 1.0, 2.0, g, pos, bump)
    with pytest.raises(ContractError):
        g_domain_bound(16.0, 2, 1.0, 2.0, bump)


def test_power_law_fit():
    nus = [8, 16, 32, 64]
    fit = fit_power_law(nus, [3.0 * n ** 0.7 for n in nus])
    assert fit.slope == pytest.approx(0.7, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)
    assert fit.stderr < 1e-12
    res = growth_from_rates(nus, [n ** 0.5 for n in nus], 0.5)
    assert res.slope == pytest.approx(0.5) and res.monotone
    with pytest.raises(NumericalError):
        growth_from_rates(nus, [1.0, -1.0, 2.0, 3.0])
    with pytest.raises(ContractError):
        fit_power_law([1.0], [1.0])


def test_gronwall_envelope_stays_below():
    run = make_run(64, 2)

    class Report:
        times = np.linspace(0, 0.1, 6)
        log_E = -5.0 + 30.0 * times + 40.0 * times ** 2
        E0_log = -5.0

    c1, env = fit_gronwall(Report, run, 0.5)
    assert np.all(env(Report.times) <= Report.log_E + 1e-12)
    # the fitted rate is tight at some record
    assert np.min(Report.log_E[1:] - env(Report.times[1:])) < 1e-9
    # a positive remainder can only lower the envelope
    env2 = gronwall_envelope(run, 0.5, -5.0, c1, C=0.0)
    assert np.all(env(Report.times) <= env2(Report.times) + 1e-12)


def test_packet_follows_bicharacteristic():
    g = Grid(4096, 400.0)
    xi0, x0 = 3.0, -50.0
    u0 = Field(g, np.exp(-((g.x - x0) / 8.0) ** 2 + 1j * xi0 * g.x))
    t = 10.0
    st = solve(ModelOperator(2), u0, SolveOptions(t), normalize=False)[-1]
    dens = np.abs(st.field.samples) ** 2
    centroid = float(np.sum(g.x * dens) / np.sum(dens))
    assert centroid == pytest.approx(bicharacteristic(x0, xi0, t, 2)[0], abs=1e-6)


def test_run_packet_small():
    op = ModelOperator(2, 1.0, (LowerCoeff(1, 0.5),))
    res = run_packet(op, 16.0, ExperimentTemplate(n_records=3))
    rep = res.report
    assert rep.times[0] == 0.0 and len(rep.log_E) == 3
    assert np.all(np.diff(rep.log_E) > 0)
    t_star = rep.times[-1]
    assert t_star == pytest.approx(min(0.3 / predicted_rate(op, 16.0), transport_limit(2)))
    assert res.lambda_rate == pytest.approx((rep.log_E[-1] - rep.log_E[0]) / t_star)


@pytest.mark.parametrize("p,nu", [(2, 16.0), (2, 32.0), (3, 8.0)])
def test_band_centroid_moves_at_group_speed(bump, p, nu):
    # the xi-band of a packet launched at (0, nu) travels at p nu^(p-1)
    s = nu ** (p - 1)
    L = 64 * s
    g = Grid(1 << int(np.ceil(np.log2(L * 2.5 * nu / np.pi))), L)
    cut = make_packet_cutoffs(g, nu, p, bump, 0)
    u0 = make_phi(DatumSpec(0.02, 2.0, 0.0), g, check_tail=False)
    t = 4 * s / (p * nu ** (p - 1))
    states = solve(ModelOperator(p), u0, SolveOptions(t), normalize=False)
    band = SampledSymbol.from_profiles(g, 1.0, cut.xi_profile(0))
    cs = []
    for st in states:
        dens = np.abs(apply(band, st.field).samples) ** 2
        cs.append(float(np.sum(g.x * dens) / np.sum(dens)))
    speed = (cs[1] - cs[0]) / t
    assert speed == pytest.approx(p * nu ** (p - 1), rel=0.05)
