import numpy as np
import pytest

from coarse_nc.channel import ChannelRealization, LinkConfig, sample_realization
from coarse_nc.infotheory import (ConditionalGaussian, asymptotics_sweep,
                                  conditional_law_given_y1, gaussian_input_rate,
                                  gmi_rate, matched_rate, relay_entropies,
                                  relay_posterior_given_y1)
from coarse_nc.modem import build_constellation
from coarse_nc.relay import build_partition

C4 = build_constellation(4)
CP1 = build_partition(1)


def _link(snr_db, r0=0):
    return LinkConfig(p1=1.0, p2=1.0, n0=10.0 ** (-snr_db / 10.0), r0=r0)


def test_qpsk_rate_tends_to_two_bits():
    est = matched_rate(_link(40.0), C4, C4, samples=20000, rng=123)
    assert abs(est.value - 2.0) < 0.02


def test_rate_vanishes_at_very_low_snr():
    est = matched_rate(_link(-40.0), C4, C4, samples=4000, rng=5)
    assert abs(est.value) < 0.01


def test_chain_rule_oracle_fixed_realization():
    """Matched relay gain equals H(Xr|Y1) - H(Xr|X1,Y1), both estimated."""
    cr = sample_realization(np.random.default_rng(6))
    lc = _link(14.0, r0=1)
    from coarse_nc.relay import optimize_d
    scale = optimize_d(cr, lc, C4, C4, CP1)
    on = matched_rate(lc, C4, C4, relay=True, cr=cr, samples=120000, rng=1)
    off = matched_rate(lc, C4, C4, relay=False, cr=cr, samples=120000, rng=2)
    ent = relay_entropies(cr, lc, c1=C4, c2=C4, scale=scale, partition=CP1,
                          samples=60000, rng=3)
    delta_rate = on.value - off.value
    delta_ent = ent.h_given_y1 - ent.h_given_x1_y1
    combined = np.sqrt(on.std_error ** 2 + off.std_error ** 2
                       + ent.se_given_y1 ** 2 + ent.se_given_x1_y1 ** 2)
    assert abs(delta_rate - delta_ent) < 3 * combined


def test_gaussian_input_rate_closed_form_no_relay():
    cr = sample_realization(np.random.default_rng(2))
    lc = _link(17.0)
    est = gaussian_input_rate(lc, relay=False, cr=cr, rng=0)
    sinr = abs(cr.h11) ** 2 / (abs(cr.h21) ** 2 + lc.n0)
    assert est.value == np.log2(1.0 + sinr)
    assert est.std_error == 0.0


def test_conditional_variance_at_zero_noise():
    cr = ChannelRealization(h11=1.0 + 0.5j, h12=0.0, h21=0.8 - 0.3j, h22=1.0,
                            g1=0.4 + 0.9j, g2=-0.7 + 0.2j)
    lc = LinkConfig(p1=1.3, p2=0.7, n0=1e-300, r0=1)
    _, var = relay_posterior_given_y1(0.3 + 0.1j, cr, lc)
    cross = abs(cr.g1 * cr.h21 - cr.g2 * cr.h11) ** 2
    expected = cross * lc.p1 * lc.p2 / (abs(cr.h11) ** 2 * lc.p1 + abs(cr.h21) ** 2 * lc.p2)
    assert abs(var - expected) < 1e-12
    assert expected > 0.0


def test_conditional_gaussian_validation():
    with pytest.raises(ValueError):
        ConditionalGaussian(mean=0j, var=-1.0)
    law = conditional_law_given_y1(0.2 + 0.1j,
                                   sample_realization(np.random.default_rng(0)),
                                   _link(10.0))
    assert law.var > 0


def _nice_full_rank_cr():
    # moderate |g2/h21| and solid cross determinant keep the small-noise
    # limits visible at reachable noise levels
    return ChannelRealization(h11=0.9 + 0.3j, h12=0.1, h21=1.1 - 0.2j, h22=1.0,
                              g1=0.8 + 0.5j, g2=0.4 - 0.6j)


def test_relay_entropies_small_noise_limits():
    cr = _nice_full_rank_cr()
    lc = LinkConfig(p1=1.0, p2=1.0, n0=1e-6, r0=1)
    est = relay_entropies(cr, lc, gaussian_inputs=True, scale=lc.n0 ** 0.25,
                          partition=CP1, samples=20000, rng=4)
    assert est.h_given_y1 >= 0.95
    # the conditional term shrinks like N0^(1/4); at 1e-8 it is under 0.05
    lc8 = LinkConfig(p1=1.0, p2=1.0, n0=1e-8, r0=1)
    est8 = relay_entropies(cr, lc8, gaussian_inputs=True, scale=lc8.n0 ** 0.25,
                           partition=CP1, samples=20000, rng=4)
    assert est8.h_given_x1_y1 <= 0.05
    assert est8.h_given_x1_y1 < est.h_given_x1_y1


def test_relay_entropies_rank_deficient_no_improvement():
    base = _nice_full_rank_cr()
    cr = ChannelRealization(h11=base.h11, h12=base.h12, h21=base.h21, h22=base.h22,
                            g1=0.7 * base.h11, g2=0.7 * base.h21)   # cross det = 0
    lc = LinkConfig(p1=1.0, p2=1.0, n0=1e-6, r0=1)
    est = relay_entropies(cr, lc, gaussian_inputs=True, scale=lc.n0 ** 0.25,
                          partition=CP1, samples=20000, rng=9)
    assert abs(est.h_given_y1 - est.h_given_x1_y1) < 0.05


def test_relay_entropies_huge_scale_degenerate():
    cr = _nice_full_rank_cr()
    lc = _link(20.0, r0=1)
    est = relay_entropies(cr, lc, gaussian_inputs=True, scale=1e9,
                          partition=CP1, samples=5000, rng=1)
    assert est.h_given_y1 < 1e-6 and est.h_given_x1_y1 < 1e-6


def test_entropy_bounds_invariant():
    rng = np.random.default_rng(14)
    for r0 in (1, 2):
        cp = build_partition(r0)
        for _ in range(3):
            cr = sample_realization(rng)
            lc = LinkConfig(p1=1.0, p2=1.0, n0=rng.uniform(0.001, 0.5), r0=r0)
            est = relay_entropies(cr, lc, c1=C4, c2=C4, gaussian_inputs=bool(rng.integers(2)),
                                  scale=0.5 + 0.2j, partition=cp, samples=8000, rng=rng)
            slack = 2 * (est.se_given_y1 + est.se_given_x1_y1)
            assert -1e-12 <= est.h_given_x1_y1 <= est.h_given_y1 + slack
            assert est.h_given_y1 <= r0 + slack


def test_std_error_scales_inverse_sqrt_samples():
    a = matched_rate(_link(10.0), C4, C4, samples=2000, rng=77)
    b = matched_rate(_link(10.0), C4, C4, samples=8000, rng=77)
    ratio = a.std_error / b.std_error
    assert abs(ratio - 2.0) < 0.4


def test_seed_determinism_bit_identical():
    kwargs = dict(relay=True, samples=1500, rng=31, threads=1)
    a = matched_rate(_link(12.0, r0=1), C4, C4, **kwargs)
    b = matched_rate(_link(12.0, r0=1), C4, C4, **kwargs)
    assert a == b
    g1 = gmi_rate(_link(12.0, r0=1), C4, C4, relay=True, samples=300,
                  realizations=40, rng=7)
    g2 = gmi_rate(_link(12.0, r0=1), C4, C4, relay=True, samples=300,
                  realizations=40, rng=7)
    assert g1 == g2


def test_gmi_matches_matched_rate_when_metric_proper():
    """Gaussian interference: the mismatched metric is the true likelihood."""
    cr = sample_realization(np.random.default_rng(3))
    lc = _link(6.0, r0=1)                  # away from the 2-bit plateau
    gmi = gmi_rate(lc, C4, gaussian_x2=True, relay=True, cr=cr,
                   samples=150000, rng=11)
    matched = matched_rate(lc, C4, gaussian_x2=True, relay=True, cr=cr,
                           samples=150000, rng=12)
    tol = 3 * np.sqrt(gmi.std_error ** 2 + matched.std_error ** 2)
    assert abs(gmi.value - matched.value) < tol + 1e-4
    assert 0.7 < gmi.s_star < 1.4          # proper metric peaks near s = 1
    assert not gmi.s_star_boundary


def test_gmi_never_exceeds_matched_mi():
    rng = np.random.default_rng(13)
    for _ in range(3):
        cr = sample_realization(rng)
        lc = _link(rng.uniform(5, 25), r0=1)
        gmi = gmi_rate(lc, C4, C4, relay=True, cr=cr, samples=60000, rng=rng)
        matched = matched_rate(lc, C4, C4, relay=True, cr=cr, samples=60000, rng=rng)
        tol = 3 * np.sqrt(gmi.std_error ** 2 + matched.std_error ** 2)
        assert gmi.value <= matched.value + tol


def test_asymptotics_sweep_monotonicity():
    cr = _nice_full_rank_cr()
    rows = asymptotics_sweep(0.25, [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6], cr,
                             samples=20000, rng=7)
    for prev, cur in zip(rows, rows[1:]):
        assert cur.h_given_y1 >= prev.h_given_y1 - 2 * (cur.se_given_y1 + prev.se_given_y1)
        assert cur.h_given_x1_y1 <= prev.h_given_x1_y1 \
            + 2 * (cur.se_given_x1_y1 + prev.se_given_x1_y1)
    assert rows[-1].h_given_y1 >= 0.95


def test_asymptotics_rejects_bad_alpha():
    cr = _nice_full_rank_cr()
    for alpha in (0.6, 0.0, -0.1, 0.5):
        with pytest.raises(ValueError):
            asymptotics_sweep(alpha, [0.1], cr, samples=100, rng=0)


def test_matched_rate_validation():
    with pytest.raises(ValueError):
        matched_rate(_link(10.0), C4, None, rng=0)
    with pytest.raises(ValueError):
        matched_rate(_link(10.0), C4, C4, samples=0, rng=0)
    with pytest.raises(ValueError):
        matched_rate(_link(10.0), C4, C4)   # rng required
