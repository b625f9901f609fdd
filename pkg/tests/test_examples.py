"""Worked examples for each public operation, one small check apiece."""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from combcap import bounds as b
from combcap import entropy as ent
from combcap import highsnr as hs
from combcap import rngdist as rd
from combcap import specfun as sf
from combcap.air import make_qam
from combcap.channel import ChannelParams, PhaseState, init_state, simulate, step_state, subchannel_phases, transmit
from combcap.optim import OptimSpec, constrained_maximize, nelder_mead
from combcap.rngdist import RngStream

EULER = 0.5772156649015329
S2C, S2R = math.pi * 1e-2, math.pi * 1e-4
P2 = ChannelParams(2, S2C, S2R)


# special functions ----------------------------------------------------------

def test_log_gamma_values():
    assert sf.log_gamma(1.0) == pytest.approx(0.0, abs=1e-15)
    assert sf.log_gamma(0.5) == pytest.approx(0.5723649429247001, abs=1e-13)
    assert sf.log_gamma(10.0) == pytest.approx(math.log(362880.0), rel=1e-14)


@pytest.mark.parametrize("x", [0.0, 0.1, 1.0])
def test_incomplete_gamma_unit_shape(x):
    assert sf.upper_incomplete_gamma(1.0, x) == pytest.approx(math.exp(-x), rel=1e-14)


def test_incomplete_gamma_half():
    assert sf.upper_incomplete_gamma(0.5, 0.0) == pytest.approx(math.sqrt(math.pi), rel=1e-14)
    quad = integrate.quad(lambda u: u ** -0.5 * math.exp(-u), 0.177, np.inf, epsabs=1e-14, epsrel=1e-13)[0]
    assert sf.upper_incomplete_gamma(0.5, 0.177) == pytest.approx(quad, abs=1e-12)


def test_e1_values():
    assert sf.exp_integral_e1(1.0) == pytest.approx(0.2193839343955203, abs=1e-10)
    e10 = sf.exp_integral_e1(10.0)
    assert 0.5 * math.exp(-10) * math.log1p(0.2) < e10 < math.exp(-10) * math.log1p(0.1)
    x = 1e-10
    assert sf.exp_integral_e1(x) + math.log(x) + EULER == pytest.approx(0.0, abs=1e-9)


def test_lambert_values():
    assert sf.lambert_w0(0.0) == 0.0
    assert sf.lambert_w0(math.e) == pytest.approx(1.0, abs=1e-14)
    assert sf.lambert_w0(-1.0 / math.e) == pytest.approx(-1.0, abs=1e-6)


def test_digamma_values():
    assert sf.digamma(1.0) == pytest.approx(-EULER, abs=1e-14)
    assert sf.digamma(0.5) == pytest.approx(-EULER - 2 * math.log(2), abs=1e-14)
    assert sf.digamma(2.0) == pytest.approx(1 - EULER, abs=1e-14)


def test_bessel_values():
    assert sf.bessel_i0(0.0) == 1.0
    assert sf.bessel_i1(0.0) == 0.0
    series = sum((0.25) ** k / math.factorial(k) ** 2 for k in range(30))
    assert sf.bessel_i0(1.0) == pytest.approx(series, rel=1e-14)


# distributions ----------------------------------------------------------------

def test_gtr_pdf_examples():
    p = rd.TruncatedGammaParams(1.0, (1.0,), 0.0)
    assert rd.gtr_pdf(p, np.array([0.7])) == pytest.approx(math.exp(-0.7))
    q = rd.TruncatedGammaParams(2.0, (0.5,), 0.1)
    assert rd.gtr_pdf(q, np.array([0.1])) == 0.0
    r = rd.TruncatedGammaParams(2.0, (0.5, 1.0), 0.1)

    def element(a, t):
        norm = integrate.quad(lambda u: u ** (a - 1) * math.exp(-u), 0.1, np.inf)[0]
        return (t / 2) ** (a - 1) * math.exp(-t / 2) / norm / 2

    assert rd.gtr_pdf(r, np.array([1.0, 1.0])) == pytest.approx(element(0.5, 1.0) * element(1.0, 1.0), rel=1e-8)


@pytest.mark.parametrize("mu,alpha,gamma,mean", [
    (1.0, 1.0, 0.0, 1.0),
    (1.0, 1.0, 0.5, 1.5),
    (3.0, 0.5, 0.1, None),
])
def test_gtr_sample_means(mu, alpha, gamma, mean):
    mean = mu * rd.j_factor(alpha, gamma) if mean is None else mean
    x = rd.gtr_sample(rd.TruncatedGammaParams(mu, (alpha,), gamma), RngStream(21), 100_000)[:, 0]
    assert abs(x.mean() - mean) <= 3 * x.std() / math.sqrt(x.size)


def test_complex_samples():
    p = rd.TruncatedGammaParams(2.0, (0.5, 1.0, 1.0), 0.05)
    n = 100_000
    z = rd.csgtr_sample(p, RngStream(22), n)
    r = rd.gtr_sample(p, RngStream(23), n)
    assert stats.ks_2samp(np.abs(z[:, 0]) ** 2, r[:, 0]).statistic < 0.01
    for m in range(3):
        assert abs(np.mean(np.exp(1j * np.angle(z[:, m])))) <= 3 / math.sqrt(n)
    energy = np.sum(np.abs(z) ** 2, axis=1)
    ref = 2.0 * np.sum(rd.j_factor(np.array([0.5, 1.0, 1.0]), 0.05))
    assert abs(energy.mean() - ref) <= 3 * energy.std() / math.sqrt(n)


def test_j_factor_examples():
    assert rd.j_factor(0.7, 0.0) == pytest.approx(0.7)
    assert rd.j_factor(1.0, 0.3) == pytest.approx(1.3)
    kw = dict(epsabs=1e-15, epsrel=1e-13, limit=200)
    num = sum(integrate.quad(lambda u: u ** 0.5 * math.exp(-u), a, z, **kw)[0] for a, z in ((0.1, 5), (5, np.inf)))
    den = sum(integrate.quad(lambda u: u ** -0.5 * math.exp(-u), a, z, **kw)[0] for a, z in ((0.1, 5), (5, np.inf)))
    assert rd.j_factor(0.5, 0.1) == pytest.approx(num / den, rel=1e-9)


def test_lemma_mean_identity():
    for a, g in [(0.5, 0.1), (0.3, 0.004), (2.0, 1.0)]:
        alt = a + math.exp(-g) * g ** a / sf.upper_incomplete_gamma(a, g)
        assert rd.j_factor(a, g) == pytest.approx(alt, rel=1e-10)


def test_wrapped_normal_samples():
    n = 100_000
    tiny = rd.wrapped_normal_sample(math.pi * 1e-5, RngStream(31), n)
    assert np.max(np.abs(tiny)) < math.pi
    sd = math.sqrt(math.pi * 1e-5)
    assert abs(tiny.std() - sd) <= 3 * sd / math.sqrt(2 * n)
    wide = rd.wrapped_normal_sample(100.0, RngStream(32), n)
    assert stats.kstest(wide, stats.uniform(-math.pi, 2 * math.pi).cdf).pvalue > 1e-3
    mid = rd.wrapped_normal_sample(S2C, RngStream(33), n)
    c = np.cos(mid)
    assert abs(c.mean() - math.exp(-S2C / 2)) <= 3 * c.std() / math.sqrt(n)


def test_wrapped_normal_entropy_values():
    assert rd.wrapped_normal_entropy(S2C) == pytest.approx(-0.4491, abs=1e-4)
    assert rd.wrapped_normal_entropy(S2R) == pytest.approx(-3.7711, abs=1e-4)
    assert rd.wrapped_normal_entropy(S2C) == pytest.approx(0.5 * math.log2(2 * math.pi * math.e * S2C), abs=1e-3)


def test_von_mises_entropy_values():
    assert rd.von_mises_entropy(0.0) == pytest.approx(math.log2(2 * math.pi))
    assert rd.von_mises_entropy(1e4) == pytest.approx(0.5 * math.log2(2 * math.pi * math.e / 1e4), abs=0.01)
    p = rd.VonMisesParams(0.0, 1.0)
    ref = integrate.quad(lambda t: -rd.von_mises_pdf(p, t) * math.log2(rd.von_mises_pdf(p, t)), -math.pi, math.pi)[0]
    assert rd.von_mises_entropy(1.0) == pytest.approx(ref, abs=1e-10)


def test_wrap_values():
    assert rd.wrap(math.pi) == -math.pi
    assert rd.wrap(1.5 * math.pi) == pytest.approx(-0.5 * math.pi)
    assert rd.wrap(-0.1) == -0.1


# channel ----------------------------------------------------------------------

def test_init_state_examples():
    assert init_state(RngStream(1)) == init_state(RngStream(1))
    n = 100_000
    g = RngStream(3)
    states = [init_state(g) for _ in range(n)]
    c = np.array([s.theta_c for s in states])
    r = np.array([s.theta_r for s in states])
    for col in (c, r):
        assert abs(np.mean(np.exp(1j * col))) <= 3 / math.sqrt(n)
    corr = np.mean(np.sin(c) * np.sin(r))
    assert abs(corr) <= 3 * 0.5 / math.sqrt(n)


def test_step_state_examples():
    tiny = ChannelParams(2, 1e-12, 1e-12)
    s = PhaseState(0.3, -0.2)
    nxt = step_state(s, tiny, RngStream(4))
    assert nxt.theta_c == pytest.approx(0.3, abs=1e-5) and nxt.theta_r == pytest.approx(-0.2, abs=1e-5)
    p = ChannelParams(2, 0.01, 0.002)
    g = RngStream(5)
    n = 100_000
    cur = PhaseState(0.0, 0.0)
    inc, path = np.empty(n), np.empty(n)
    for k in range(n):
        nxt = step_state(cur, p, g)
        inc[k] = rd.wrap(nxt.theta_c - cur.theta_c)
        path[k] = nxt.theta_c
        cur = nxt
    assert abs(inc.var() - 0.01) <= 3 * 0.01 * math.sqrt(2 / n)


def test_stationary_marginal_is_uniform():
    # many independent long walks, last sample of each
    p = ChannelParams(2, 0.5, 0.5)
    tc, _ = __import__("combcap.channel", fromlist=["phase_paths"]).phase_paths(p, RngStream(6), 200, batch=20_000)
    assert stats.kstest(tc[:, -1], stats.uniform(-math.pi, 2 * math.pi).cdf).pvalue > 1e-3


def test_subchannel_phase_examples():
    np.testing.assert_allclose(subchannel_phases(PhaseState(0.1, 0.01), 4), [0.1, 0.11, 0.12, 0.13])
    np.testing.assert_allclose(subchannel_phases(PhaseState(-2.0, 0.0), 5), np.full(5, -2.0))
    assert subchannel_phases(PhaseState(3.0, 1.0), 2)[1] == pytest.approx(4.0 - 2 * math.pi)


def test_transmit_examples():
    p = ChannelParams(3, 0.01, 0.001)
    n = 100_000
    x = np.tile([0.0, 2.0, 1j], (n, 1))
    traj = simulate(x, p, RngStream(7))
    pw = np.abs(traj.y) ** 2
    for m, ref in enumerate([1.0, 5.0, 2.0]):
        assert abs(pw[:, m].mean() - ref) <= 3 * pw[:, m].std() / math.sqrt(n)
    quiet = ChannelParams(3, 0.01, 0.001, noiseless=True)
    y = transmit(np.array([0.5, 2.0, 1j]), PhaseState(1.0, 0.3), quiet, RngStream(8))
    np.testing.assert_allclose(np.abs(y), [0.5, 2.0, 1.0])


# entropy estimators ------------------------------------------------------------

def test_knn_examples():
    g = RngStream(41).gen
    n = 100_000
    assert ent.knn_entropy(g.random(n)) == pytest.approx(0.0, abs=0.02)
    pair = np.column_stack([rd.wrapped_normal_sample(S2C, RngStream(42), n),
                            rd.wrapped_normal_sample(S2R, RngStream(43), n)])
    assert ent.knn_entropy(pair, circular=[0, 1]) == pytest.approx(-4.220, abs=0.03)


def test_conditional_entropy_examples():
    g = RngStream(44).gen
    n = 100_000
    a, c = g.normal(size=n), g.normal(size=n)
    h_a = 0.5 * math.log2(2 * math.pi * math.e)
    assert ent.conditional_entropy_mc(np.column_stack([a, c]), [1]) == pytest.approx(h_a, abs=0.05)
    ang = g.uniform(-math.pi, math.pi, 1000)
    with pytest.raises(ValueError):
        ent.conditional_entropy_mc(np.column_stack([ang, ang, ang]), [1], circular=[0, 1, 2])
    dc = rd.wrapped_normal_sample(S2C, RngStream(45), n)
    y = 1e3 + (g.normal(size=n) + 1j * g.normal(size=n)) / math.sqrt(2)
    joint = np.column_stack([rd.wrap(dc + np.angle(y)), np.abs(y)])
    assert ent.conditional_entropy_mc(joint, [1], circular=[0]) == pytest.approx(rd.wrapped_normal_entropy(S2C), abs=0.03)


def test_ncx2_examples():
    assert ent.ncx2_entropy(0.0) == pytest.approx(1.4427, abs=1e-4)
    g = RngStream(46).gen
    n = 1_000_000
    t = np.abs(2.0 + (g.normal(size=n) + 1j * g.normal(size=n)) / math.sqrt(2)) ** 2
    assert ent.ncx2_entropy(2.0) == pytest.approx(ent.knn_entropy(t), abs=0.02)


def test_elog_examples():
    assert ent.elog_ncx2(1.0) == pytest.approx(0.3165, abs=1e-4)
    assert ent.elog_ncx2(1e3) == pytest.approx(math.log2(1e6), abs=1e-12)
    g = RngStream(47).gen
    n = 1_000_000
    t = np.abs(3.0 + (g.normal(size=n) + 1j * g.normal(size=n)) / math.sqrt(2)) ** 2
    assert ent.elog_ncx2(3.0) == pytest.approx(np.mean(np.log2(t)), abs=0.005)


# bounds -----------------------------------------------------------------------

def test_awgn_examples():
    assert b.awgn_capacity(5.0, 5) == pytest.approx(5.0)
    assert b.awgn_capacity(0.0, 2) == 0.0
    assert b.awgn_capacity(2 * 10 ** 4.099, 2) / 2 == pytest.approx(13.6166, abs=1e-3)


def test_r_functional_term_examples():
    s = np.array([3.0, 5.0])
    alpha = np.array([0.4, 0.7])
    lam = alpha.sum() * rd.LOG2E
    r1 = b.r_functional(10.0, lam, alpha, s)
    r2 = b.r_functional(1e4, lam, alpha, s)
    assert r1 == pytest.approx(r2, abs=1e-12)   # first term vanishes for every rho
    ones = np.ones(2)
    val = b.r_functional(10.0, 2 * rd.LOG2E, ones, s)
    assert val == pytest.approx(-ent.ncx2_entropy(3.0) - ent.ncx2_entropy(5.0), abs=1e-5)
    big = np.array([100.0, 100.0])
    h = -b.r_functional(10.0, 2 * rd.LOG2E, ones, big) / 2
    assert h == pytest.approx(0.5 * math.log2(1e4) + 0.5 * math.log2(4 * math.pi * math.e), abs=0.01)


def test_f_functional_limits():
    h_pair = rd.wrapped_normal_entropy(S2C) + rd.wrapped_normal_entropy(S2R)
    assert b.f_functional(2, [1e3, 1e3], P2) == pytest.approx(-h_pair, abs=0.05)
    assert b.f_functional(2, [0.0, 0.0], P2) == pytest.approx(-2 * math.log2(2 * math.pi), abs=0.05)
    wide = ChannelParams(3, S2C, 60.0)
    s = np.array([2.0, 2.0, 2.0])
    single = ent.phase_single_entropy(2 * np.linalg.norm(s) ** 2, S2C)
    assert b.f_functional(3, s, wide) + single == pytest.approx(-math.log2(2 * math.pi), abs=0.05)


def test_upper_value_grows_with_snr():
    alpha = np.array([0.6, 0.6])
    lam = alpha.sum() * rd.LOG2E + 1.0
    lo, _ = b.upper_bound_value(2 * 10 ** 1.5, lam, alpha, P2)
    hi, _ = b.upper_bound_value(2 * 10 ** 2.5, lam, alpha, P2)
    assert hi >= lo


def test_g_penalty_saturation_and_phi():
    assert b._clamped_phase_bound(b.phi_functional(2, [1e-4, 1e-4, 1e-4])) == pytest.approx(math.log2(2 * math.pi))
    assert b.phi_functional(2, [1.0, 2.0, 10.0]) == pytest.approx(2.01)


def test_m2_lower_bound_has_no_penalty():
    _, info = b.lower_bound_value(2 * 10 ** 2.0, 2, P2, [0.5, 0.5], 0.01, detail=True)
    assert info["penalty"] == 0.0


# high-SNR asymptotes ---------------------------------------------------------

def test_alpha_star_examples():
    assert hs.alpha_star(0, 4) == 0.5 and hs.alpha_star(1, 4) == 0.5 and hs.alpha_star(5, 8) == 1.0


def test_c_factor_examples():
    c = hs.c_factor(0, 0.004)
    assert 0.004 ** c == pytest.approx(0.004 ** 0.5 / c, rel=1e-10)
    # vanishing limit; at 1e-6 the exact value is 1.014e-3
    assert hs.c_factor(0, 1e-6) == pytest.approx(1.0141e-3, rel=1e-4)
    assert hs.c_factor(0, 1e-12) < hs.c_factor(0, 1e-6) < hs.c_factor(0, 1e-3)
    assert hs.c_factor(0, 1e-300) < 1e-140
    lg = math.log(0.004)
    assert hs.c_factor(2, 0.004, 5) == pytest.approx(sf.lambert_w0(0.004 * lg) / lg, rel=1e-12)


def test_alpha_prime_examples():
    assert hs.alpha_prime(0, 1e-12) == pytest.approx(0.5, abs=0.01)
    assert hs.alpha_prime(0, hs.X_MAX) > 0
    for g in np.geomspace(1e-8, hs.X_MAX, 40):
        for m in (0, 2):
            assert rd.j_factor(hs.alpha_prime(m, g, 4), g) <= hs.alpha_star(m, 4) + 1e-12


def test_gamma_schedule_examples():
    assert hs.gamma_schedule(1.0) == pytest.approx(hs.X_MAX)
    assert hs.gamma_schedule(1e4) == pytest.approx(hs.X_MAX / 100)
    assert hs.gamma_schedule(0.5) == pytest.approx(hs.X_MAX / 2)


def test_asymptote_slopes():
    cfg2 = hs.HsnrConfig(2, S2C, S2R)
    assert hs.u_hsnr(2e5, cfg2) - hs.u_hsnr(2e4, cfg2) == pytest.approx(math.log2(10))
    cfg5 = hs.HsnrConfig(5, S2C, S2R, mc_samples=20_000)
    terms = hs.gap_terms(cfg5)
    d = (hs.l_hsnr(5e6, cfg5, terms) - hs.l_hsnr(5e4, cfg5, terms)) / (2 * math.log2(10))
    assert d == pytest.approx(4.0, abs=0.01)
    assert hs.l_hsnr(100.0, cfg2) == hs.u_hsnr(100.0, cfg2)


def test_gap_term_antithetic_oracle():
    # independent estimate from inverse-CDF gamma draws with antithetic uniforms
    g = np.random.default_rng(1234)
    n = 200_000
    u = g.random((n, 3))
    vals = []
    for v in (u, 1 - u):
        e0 = stats.gamma(0.5).ppf(v[:, 0])
        e1 = stats.gamma(0.5).ppf(v[:, 1])
        e2 = stats.expon.ppf(v[:, 2])
        vals.append(0.5 * np.log2(1 + 4 * e2 / e1 + e2 / e0))
    pairs = 0.5 * (vals[0] + vals[1])
    ref, ref_err = pairs.mean(), pairs.std() / math.sqrt(n)
    est = hs.g_hsnr_term(2, 3, n=400_000, rng=RngStream(3, 7))
    assert est.bits == pytest.approx(ref, abs=3 * (est.stderr + ref_err))


# constellations and optimizer --------------------------------------------------

def test_qam_examples():
    np.testing.assert_allclose(np.sort_complex(make_qam(4).points),
                               np.sort_complex(np.array([-1 - 1j, -1 + 1j, 1 - 1j, 1 + 1j]) / math.sqrt(2)))
    assert np.mean(np.abs(make_qam(64).points) ** 2) == pytest.approx(1.0, abs=1e-12)


def test_nelder_mead_examples():
    quad = nelder_mead(OptimSpec(lambda x: float((x[0] - 3) ** 2), [(0, 10)], xtol=1e-10, ftol=1e-16), [8.0])
    assert quad.x[0] == pytest.approx(3.0, abs=1e-6)
    rosen = nelder_mead(OptimSpec(lambda x: float(100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2),
                                  [(-2, 2), (-2, 2)], max_evals=2000, xtol=1e-10, ftol=1e-14), [-1.0, 1.0])
    np.testing.assert_allclose(rosen.x, [1.0, 1.0], atol=1e-3)
    assert rosen.evals <= 2000
    g = np.random.default_rng(0)
    noisy = nelder_mead(OptimSpec(lambda x: float((x[0] - 3) ** 2 + g.normal(0, 1e-2)), [(0, 10)],
                                  max_evals=300), [8.0])
    assert (noisy.x[0] - 3) ** 2 <= 0.01


def test_constrained_equal_split():
    M, rho = 4, 8.0
    spec = OptimSpec(lambda s: float(np.sum(np.log(s * s))), [(1e-3, 5.0)] * M, max_evals=3000,
                     xtol=1e-10, ftol=1e-13)
    res = constrained_maximize(spec, lambda s: float(np.sum(s * s)), rho, np.full(M, 0.5), starts=2,
                               project=lambda s: s * math.sqrt(rho / np.sum(s * s)))
    np.testing.assert_allclose(res.x ** 2, rho / M, atol=1e-3)
    assert res.active
