import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from combcap import _pytrellis, kernels
from combcap.air import (Constellation, TrellisConfig, _full_mixture, _marg_loglik, _grid,
                         air_estimate, make_qam, transition_kernel)
from combcap.channel import ChannelParams
from combcap.rngdist import RngStream

P2 = ChannelParams(2, math.pi * 1e-2, math.pi * 1e-4)
SMALL = TrellisConfig(levels_c=32, levels_r=8, block_len=200, n_blocks=4)


@pytest.mark.parametrize("order", [4, 16, 64, 256, 1024])
def test_qam_unit_energy(order):
    c = make_qam(order)
    assert c.order == order
    assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0)
    assert c.is_square_grid


def test_qam16_minimum_distance():
    pts = make_qam(16).points
    d2 = np.abs(pts[:, None] - pts[None, :]) ** 2
    assert d2[d2 > 0].min() == pytest.approx(0.4)
    assert make_qam(16).pitch == pytest.approx(math.sqrt(0.4))


def test_qam_rejects_unsupported_order():
    with pytest.raises(ValueError):
        make_qam(32)


def test_constellation_validation():
    with pytest.raises(ValueError):
        Constellation(np.array([1.0]))
    with pytest.raises(ValueError):
        Constellation(np.array([1.0, 1.0]))
    assert not Constellation(np.exp(2j * np.pi * np.arange(8) / 8)).is_square_grid


def test_trellis_config_validation():
    with pytest.raises(ValueError):
        TrellisConfig(levels_c=2)
    with pytest.raises(ValueError):
        TrellisConfig(block_len=10)
    with pytest.raises(ValueError):
        TrellisConfig(mode="joint", levels_c=30, levels_r=8)
    with pytest.raises(ValueError):
        TrellisConfig(mode="joint", levels_c=1024, levels_r=128)
    with pytest.raises(ValueError):
        TrellisConfig(mode="bogus")


@pytest.mark.parametrize("sigma2,levels", [(1e-4, 64), (0.0314, 64), (0.0314, 512), (2.0, 16), (1e-9, 16)])
def test_transition_kernel_sums_to_one(sigma2, levels):
    taps, off = transition_kernel(sigma2, levels)
    assert taps.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(taps >= 0)
    assert 0 <= off < taps.size
    # symmetric increment law, compared on the circle
    circ = np.zeros(levels)
    np.add.at(circ, (np.arange(taps.size) - off) % levels, taps)
    np.testing.assert_allclose(circ, circ[(-np.arange(levels)) % levels], atol=1e-14)


def test_transition_kernel_matches_brute_force():
    # uniform source position in the bin, Gaussian step, destination bin counted
    sigma2, levels = 0.05, 32
    width = 2 * math.pi / levels
    g = RngStream(0).gen
    n = 4_000_000
    start = g.uniform(0, width, n)
    dest = np.floor((start + g.normal(0, math.sqrt(sigma2), n)) / width).astype(int)
    taps, off = transition_kernel(sigma2, levels)
    counts = np.bincount(dest + off, minlength=taps.size)[:taps.size] / n
    np.testing.assert_allclose(counts, taps, atol=2e-3)


def test_transition_kernel_wide_increments_become_uniform():
    taps, _ = transition_kernel(200.0, 16)
    np.testing.assert_allclose(taps, np.full(taps.size, 1 / 16), atol=1e-9)


def _random_loglik(B, n, Lc, Lr, seed):
    return RngStream(seed).gen.normal(scale=3.0, size=(B, n, Lc, Lr))


@pytest.mark.parametrize("shape", [(2, 30, 16, 1), (3, 20, 8, 4)])
def test_forward_recursion_backends_agree(shape):
    ll = _random_loglik(*shape, seed=1)
    kc, oc = transition_kernel(0.05, shape[2])
    kr, orr = transition_kernel(0.2, shape[3]) if shape[3] > 1 else (np.ones(1), 0)
    a = kernels.forward_logz(ll, kc, oc, kr, orr)
    b = kernels.forward_logz_pure(ll, kc, oc, kr, orr)
    np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-9)


def test_forward_recursion_matches_dense_matrix():
    B, n, L = 1, 12, 8
    ll = _random_loglik(B, n, L, 1, seed=2)
    kc, oc = transition_kernel(0.3, L)
    T = np.zeros((L, L))
    for t, p in enumerate(kc):
        for j in range(L):
            T[(j - (t - oc)) % L, j] += p  # source row, destination column
    a = np.full(L, 1.0 / L)
    logz = 0.0
    for k in range(n):
        if k:
            a = a @ T
        a = a * np.exp(ll[0, k, :, 0])
        logz += math.log(a.sum())
        a /= a.sum()
    assert _pytrellis.forward_logz(ll, kc, oc, np.ones(1), 0)[0] == pytest.approx(logz, rel=1e-12)
    assert kernels.forward_logz(ll, kc, oc, np.ones(1), 0)[0] == pytest.approx(logz, rel=1e-12)


@settings(max_examples=15)
@given(st.sampled_from([16, 64, 256]), st.floats(0.5, 40.0), st.integers(0, 10_000))
def test_windowed_mixture_matches_full_sum(order, scale, seed):
    c = make_qam(order)
    g = RngStream(seed).gen
    x = c.points[g.integers(0, order, 300)] * scale
    y = x * np.exp(1j * g.normal(0, 0.05, 300)) + (g.normal(size=300) + 1j * g.normal(size=300)) / math.sqrt(2)
    phases = _grid(8)
    win = _marg_loglik(y, c, scale, phases, 0.01, True)
    points = c.points * scale
    n0 = 1.0 + np.abs(points) ** 2 * 0.01
    derot = (y[:, None] * np.exp(-1j * phases)).reshape(-1)
    full = _full_mixture(derot, points, n0).reshape(win.shape) - math.log(order)
    np.testing.assert_allclose(win, full, atol=1e-12)


def test_mixture_backends_agree():
    c = make_qam(64)
    g = RngStream(5).gen
    re, im = g.normal(scale=8, size=2000), g.normal(scale=8, size=2000)
    pitch = c.pitch * 7.0
    lev0 = float(c.points.real.min() * 7.0)
    n0 = 1.0 + np.abs(c.points * 7.0) ** 2 * 0.003
    a = kernels.mixture_loglik(re, im, lev0, pitch, 8, n0, 3)
    b = kernels.mixture_loglik_pure(re, im, lev0, pitch, 8, n0, 3)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-12)


def test_qpsk_noiseless_frozen_reaches_two_bits():
    p = ChannelParams(2, 1e-6, 1e-8, noiseless=True, frozen_phase=True)
    t = TrellisConfig(levels_c=16, levels_r=4, block_len=200, n_blocks=4)
    res = air_estimate(make_qam(4), p, 2 * 10 ** 3.0, t, rng=0)
    assert res.bits == pytest.approx(2.0, abs=0.02)


@pytest.mark.parametrize("order", [4, 16])
def test_air_below_log_order(order):
    res = air_estimate(make_qam(order), P2, 2 * 10 ** 4.0, SMALL, rng=1)
    assert res.bits <= math.log2(order) + 3 * res.stderr


def test_air_increases_with_snr():
    vals = [air_estimate(make_qam(16), P2, 2 * 10 ** (d / 10), SMALL, rng=2).bits for d in (0.0, 10.0, 20.0)]
    assert vals[0] < vals[1] < vals[2]


def test_air_reproducible_and_seed_sensitive():
    a = air_estimate(make_qam(16), P2, 200.0, SMALL, rng=RngStream(4, 303))
    b = air_estimate(make_qam(16), P2, 200.0, SMALL, rng=4)
    c = air_estimate(make_qam(16), P2, 200.0, SMALL, rng=5)
    assert a.bits == b.bits
    assert a.bits != c.bits
    assert a.per_block.shape == (SMALL.n_blocks,)


def test_air_joint_mode_close_to_per_subchannel():
    fine = TrellisConfig(levels_c=64, levels_r=16, block_len=200, n_blocks=4)
    joint = TrellisConfig(levels_c=64, levels_r=16, block_len=200, n_blocks=4, mode="joint")
    a = air_estimate(make_qam(16), P2, 2 * 10 ** 2.0, fine, rng=6)
    b = air_estimate(make_qam(16), P2, 2 * 10 ** 2.0, joint, rng=6)
    assert b.bits == pytest.approx(a.bits, abs=0.15)


def test_air_nonsquare_constellation_uses_full_mixture():
    psk = Constellation(np.exp(2j * np.pi * np.arange(8) / 8))
    res = air_estimate(psk, P2, 2 * 10 ** 2.0, SMALL, rng=7)
    assert 0.0 < res.bits <= 3.0 + 3 * res.stderr


def test_air_rejects_nonpositive_snr():
    with pytest.raises(ValueError):
        air_estimate(make_qam(4), P2, 0.0, SMALL)


def test_pure_backend_selected_by_environment():
    import os
    import subprocess
    import sys
    env = dict(os.environ, COMBCAP_PURE="1")
    out = subprocess.run([sys.executable, "-c", "from combcap import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
