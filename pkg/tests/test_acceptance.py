"""Acceptance gate: one test per criterion, one printed PASS/FAIL line each.

Scaled operating points (block length 4000, reduced frame budgets) follow
the stated tolerances; all expected values were either taken from the
source tables/limits or recomputed with the independent oracles in the
unit-test modules.  Run with `pytest -s tests/test_acceptance.py` to see
the per-criterion lines.
"""

import io
import math

import numpy as np

from coarse_nc import harness, ldpc
from coarse_nc.channel import ChannelRealization, LinkConfig, sample_realization, transmit
from coarse_nc.harness import ExperimentConfig
from coarse_nc.infotheory import (asymptotics_sweep, gaussian_input_rate,
                                  gmi_rate, matched_rate)
from coarse_nc.metrics import matched_llr, mismatched_llr
from coarse_nc.modem import Interleaver, build_constellation, deinterleave, interleave
from coarse_nc.relay import RelayScale, build_partition, label_distribution, quantize

C4 = build_constellation(4)
CP1 = build_partition(1)
THREADS = 2


def _line(num, name, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {num} ({name}): {status} -- {detail}")
    return ok


def _link(snr_db, r0=0):
    return LinkConfig(p1=1.0, p2=1.0, n0=10.0 ** (-snr_db / 10.0), r0=r0)


# ----------------------------------------------------------------------
# 1. Table of minimum-SNR gains, 4-QAM/4-QAM ensemble
# ----------------------------------------------------------------------

def test_acceptance_1_table_gains():
    # The published gain values (0.86 dB / 2.75 dB) belong to the rate-1.0
    # threshold (the running text's operating point); the 1.5-bit variant
    # is measured and reported as well.  See the decisions ledger.
    cfg = ExperimentConfig(kind="table1", m1=4, m2=4, realizations=20000,
                           threshold=1.0, seed=606, threads=THREADS).validate()
    _, rows = harness.run_table1(cfg)
    gains = {row[0]: row[3] for row in rows}
    cfg_15 = ExperimentConfig(kind="table1", m1=4, m2=4, realizations=4000,
                              threshold=1.5, seed=606, threads=THREADS).validate()
    _, rows_15 = harness.run_table1(cfg_15)
    gains_15 = {row[0]: row[3] for row in rows_15}
    ok = (abs(gains[1] - 0.86) <= 0.3) and (abs(gains[2] - 2.75) <= 0.4) \
        and gains[0] == 0.0
    assert _line(1, "table of minimum-SNR gains",
                 ok,
                 f"threshold 1.0: r0=1 gain {gains[1]:+.2f} dB (target 0.86+-0.3), "
                 f"r0=2 gain {gains[2]:+.2f} dB (target 2.75+-0.4); "
                 f"threshold 1.5 measured: {gains_15[1]:+.2f} / {gains_15[2]:+.2f} dB")
    assert gains_15[2] > gains_15[1] > 0.0


# ----------------------------------------------------------------------
# 2. QPSK rate asymptote
# ----------------------------------------------------------------------

def test_acceptance_2_qpsk_rate_asymptote():
    est = matched_rate(_link(40.0), C4, C4, samples=20000, rng=707, threads=THREADS)
    ok = abs(est.value - 2.0) < 0.02
    assert _line(2, "QPSK rate asymptote",
                 ok, f"R1(40 dB) = {est.value:.4f} +- {est.std_error:.4f} bits (target 2.00+-0.02)")


# ----------------------------------------------------------------------
# 3. Small-noise entropy sweep (d = N0^0.25)
# ----------------------------------------------------------------------

def test_acceptance_3_small_noise_sweep():
    cr = ChannelRealization(h11=0.9 + 0.3j, h12=0.1, h21=1.1 - 0.2j, h22=1.0,
                            g1=0.8 + 0.5j, g2=0.4 - 0.6j)
    assert cr.is_full_rank()
    rows = asymptotics_sweep(0.25, [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6], cr,
                             samples=20000, rng=33)
    mono_up = all(b.h_given_y1 >= a.h_given_y1 - 2 * (a.se_given_y1 + b.se_given_y1)
                  for a, b in zip(rows, rows[1:]))
    mono_down = all(b.h_given_x1_y1 <= a.h_given_x1_y1
                    + 2 * (a.se_given_x1_y1 + b.se_given_x1_y1)
                    for a, b in zip(rows, rows[1:]))
    end_y1 = rows[-1].h_given_y1
    end_x1y1 = rows[-1].h_given_x1_y1
    ok = mono_up and mono_down and end_y1 >= 0.95 and end_x1y1 <= 0.05
    assert _line(3, "small-noise entropy sweep", ok,
                 f"monotone: {mono_up and mono_down}; H(Xr|Y1) -> {end_y1:.3f} (>=0.95); "
                 f"H(Xr|X1,Y1) -> {end_x1y1:.3f} (<=0.05). Known limit: the conditional "
                 f"entropy of a quantizer cell at per-axis noise ratio s = N0^0.25/sqrt(2) "
                 f"averages ~2.1 bits*s per axis over cell positions, an exact floor of "
                 f"~0.09-0.13 at N0=1e-6 for any gains; the 0.05 endpoint needs N0 ~ 1e-8.")


# ----------------------------------------------------------------------
# 4. Gaussian-input relay gain at 40 dB
# ----------------------------------------------------------------------

def test_acceptance_4_gaussian_input_relay_gain():
    deltas = {}
    for r0 in (1, 2):
        lc = _link(40.0, r0=r0)
        on = gaussian_input_rate(lc, relay=True, samples=20000, rng=42, threads=THREADS)
        off = gaussian_input_rate(lc, relay=False, samples=20000, rng=42, threads=THREADS)
        deltas[r0] = on.value - off.value
    ok = deltas[1] >= 0.85 and deltas[2] >= 1.3
    assert _line(4, "Gaussian-input relay gain", ok,
                 f"dR1(r0=1) = {deltas[1]:.3f} bits (>=0.85), "
                 f"dR1(r0=2) = {deltas[2]:.3f} bits (>=1.3)")


# ----------------------------------------------------------------------
# 5. GMI saturation and relay relief
# ----------------------------------------------------------------------

def test_acceptance_5_gmi_saturation_and_relief():
    kwargs = dict(samples=512, realizations=3000, rng=99, threads=THREADS)
    no30 = gmi_rate(_link(30.0, r0=1), C4, C4, relay=False, **kwargs)
    no40 = gmi_rate(_link(40.0, r0=1), C4, C4, relay=False, **kwargs)
    with40 = gmi_rate(_link(40.0, r0=1), C4, C4, relay=True, **kwargs)
    saturation = no40.value - no30.value
    relief = with40.value - no40.value
    ok = saturation < 0.05 and relief >= 0.5
    assert _line(5, "GMI saturation and relief", ok,
                 f"rate(40)-rate(30) = {saturation:+.4f} (<0.05); relay relief = "
                 f"{relief:.3f} bits (>=0.5). Known limit: the candidate separation the "
                 f"mismatched metric needs scales with |g1*h21-g2*h11|/|h21|, which the "
                 f"relay (knowing only g1, g2, N0) cannot target when picking its scale; "
                 f"the achievable relief saturates at 0.43-0.47 bits at this SNR.")


# ----------------------------------------------------------------------
# 6. LDPC BER gains, matched decoding (scaled block length)
# ----------------------------------------------------------------------

def _ber_points(r0, metric, points, seed=1234):
    """(snr -> ber, frames) for the given frame budget per point."""
    out = {}
    for snr, max_frames in points:
        cfg = ExperimentConfig(kind="ber", snr_db_list=[snr], r0=r0, m1=4, m2=4,
                               metric=metric, block_length=4000, max_frames=max_frames,
                               target_frame_errors=50, seed=seed,
                               threads=THREADS).validate()
        _, rows = harness.run(cfg)
        snr_db, frames, bit_errors, ber, fer, _ = rows[0]
        out[snr] = (ber, frames, bit_errors)
    return out


def _crossing(points, target=1e-4, k=2000):
    """Log-linear SNR at the target BER; zero counts floored at 3 errors."""
    snrs = sorted(points)
    floored = []
    for s in snrs:
        ber, frames, _ = points[s]
        floored.append((s, max(ber, 3.0 / (frames * k))))
    for (s1, b1), (s2, b2) in zip(floored, floored[1:]):
        if b1 >= target >= b2:
            return s1 + (s2 - s1) * (math.log(b1 / target) / math.log(b1 / b2))
    return None


def test_acceptance_6_ldpc_ber_gains_matched():
    base = _ber_points(0, "matched", [(7.5, 160), (8.0, 160), (8.5, 64)])
    relay1 = _ber_points(1, "matched", [(6.0, 160), (6.5, 160), (7.0, 64)])
    relay2 = _ber_points(2, "matched", [(4.0, 160), (4.5, 160), (5.0, 64)])
    s0, s1, s2 = _crossing(base), _crossing(relay1), _crossing(relay2)
    gain1 = None if (s0 is None or s1 is None) else s0 - s1
    gain2 = None if (s0 is None or s2 is None) else s0 - s2
    # paired-seed backstop at every relay-curve SNR
    backstop = True
    details = []
    for r0, curve in ((1, relay1), (2, relay2)):
        for snr, (ber, frames, errs) in curve.items():
            cfg = ExperimentConfig(kind="ber", snr_db_list=[snr], r0=0, m1=4, m2=4,
                                   metric="matched", block_length=4000,
                                   max_frames=frames, target_frame_errors=10 ** 9,
                                   seed=1234, threads=THREADS).validate()
            _, rows = harness.run(cfg)
            base_errs = rows[0][2]
            backstop &= errs <= base_errs
            details.append(f"{snr}dB r0={r0}: {errs}<= {base_errs}")
    ok = gain1 is not None and gain2 is not None \
        and gain1 >= 0.7 and gain2 >= 1.8 and backstop
    assert _line(6, "LDPC BER gains (matched)", ok,
                 f"SNR@BER1e-4: r0=0 {s0 and round(s0, 2)} dB, r0=1 {s1 and round(s1, 2)} dB, "
                 f"r0=2 {s2 and round(s2, 2)} dB; gains {gain1 and round(gain1, 2)} dB (>=0.7), "
                 f"{gain2 and round(gain2, 2)} dB (>=1.8); paired backstop "
                 f"{'holds' if backstop else 'violated'}")


# ----------------------------------------------------------------------
# 7. Mismatched-decoding rescue by the relay
# ----------------------------------------------------------------------

def test_acceptance_7_mismatched_rescue():
    cfg_fail = ExperimentConfig(kind="ber", snr_db_list=[20.0], r0=0, m1=4, m2=4,
                                metric="mismatched", block_length=4000, max_frames=48,
                                target_frame_errors=10 ** 9, seed=555,
                                threads=THREADS).validate()
    _, rows = harness.run(cfg_fail)
    ber_norelay = rows[0][3]
    cfg_ok = ExperimentConfig(kind="ber", snr_db_list=[12.5], r0=1, m1=4, m2=4,
                              metric="mismatched", block_length=4000, max_frames=120,
                              target_frame_errors=10 ** 9, seed=556,
                              threads=THREADS).validate()
    _, rows = harness.run(cfg_ok)
    ber_relay, frames = rows[0][3], rows[0][1]
    ok = ber_norelay > 1e-2 and ber_relay < 1e-4
    assert _line(7, "mismatched rescue", ok,
                 f"no relay @20 dB: BER {ber_norelay:.3e} (>1e-2); "
                 f"r0=1 @12.5 dB: BER {ber_relay:.3e} over {frames} frames (<1e-4)")


# ----------------------------------------------------------------------
# 8. Property suites
# ----------------------------------------------------------------------

def test_acceptance_8_property_suites():
    rng = np.random.default_rng(2024)
    checks = []

    # cell-mass total probability on 1e3 random parameter draws
    means = (rng.standard_normal(1000) + 1j * rng.standard_normal(1000)) * 3
    var = rng.uniform(1e-6, 25.0, 1000)
    d = rng.standard_normal(1000) + 1j * rng.standard_normal(1000)
    d[np.abs(d) < 0.05] = 0.3
    worst = 0.0
    for cp in (CP1, build_partition(2)):
        pmf = label_distribution(means, var, d, cp)
        worst = max(worst, float(np.abs(pmf.sum(axis=-1) - 1.0).max()))
    checks.append(("cell-mass total probability 1e3 draws", worst < 1e-9,
                   f"max |sum-1| = {worst:.1e}"))

    # coset-label periodicity on 1e3 random translates
    ok_per = True
    for cp in (CP1, build_partition(2)):
        p = rng.integers(-100, 100, (1000, 2))
        z = rng.integers(-40, 40, (1000, 2))
        shift = cp.generator @ z.T
        ok_per &= bool(np.array_equal(cp.label(p[:, 0], p[:, 1]),
                                      cp.label(p[:, 0] + shift[0], p[:, 1] + shift[1])))
    checks.append(("coset-label periodicity 1e3 translates", ok_per, ""))

    # mismatched = matched under Gaussian interference, 1e-9
    from test_metrics import brute_cell_mass
    worst_q = 0.0
    for _ in range(40):
        cr = sample_realization(rng)
        lc = LinkConfig(p1=1.0, p2=rng.uniform(0.5, 1.5), n0=rng.uniform(0.05, 0.4), r0=1)
        dq = RelayScale(0.7 * np.exp(1j * rng.uniform(0, 2 * np.pi)))
        x1 = C4.symbols[rng.integers(0, 4)]
        x2 = (rng.standard_normal() + 1j * rng.standard_normal()) * np.sqrt(0.5)
        y1, _, yr = transmit(x1, x2, cr, lc, rng)
        xr = int(quantize(yr, dq, CP1))
        gam = mismatched_llr(complex(y1), xr, cr, lc, C4, dq, CP1).values
        sig_q = abs(cr.h21) ** 2 * lc.p2 + lc.n0
        ref = []
        for i in range(2):
            num = den = 0.0
            for a in range(4):
                x1s = C4.symbols[a]
                q1 = math.exp(-abs(y1 - cr.h11 * x1s) ** 2 / sig_q) / (math.pi * sig_q)
                mu = cr.g1 * x1s + cr.g2 * np.conj(cr.h21) * lc.p2 / sig_q * (y1 - cr.h11 * x1s)
                vv = lc.n0 + abs(cr.g2) ** 2 * lc.p2 * lc.n0 / sig_q
                w = q1 * brute_cell_mass(xr, mu, vv, dq.d, CP1)
                num, den = (num + w, den) if C4.labels[a, i] else (num, den + w)
            ref.append(math.log(max(num, 1e-300)) - math.log(max(den, 1e-300)))
        worst_q = max(worst_q, float(np.abs(gam - np.clip(ref, -50, 50)).max()))
    checks.append(("mismatched = matched under Gaussian interference",
                   worst_q < 1e-9, f"max diff = {worst_q:.1e}"))

    # LLR-posterior brute-force agreement to 1e-6
    worst_p = 0.0
    for _ in range(40):
        cr = sample_realization(rng)
        lc = LinkConfig(p1=1.0, p2=1.0, n0=rng.uniform(0.05, 0.5), r0=1)
        dq = RelayScale(0.3 + 0.5 * abs(rng.standard_normal()))
        x1 = C4.symbols[rng.integers(0, 4)]
        x2 = C4.symbols[rng.integers(0, 4)]
        y1, _, yr = transmit(x1, x2, cr, lc, rng)
        xr = int(quantize(yr, dq, CP1))
        lam = matched_llr(complex(y1), xr, cr, lc, C4, C4, dq, CP1).values
        for i in range(2):
            num = den = 0.0
            for a in range(4):
                for b in range(4):
                    mu = cr.h11 * C4.symbols[a] + cr.h21 * C4.symbols[b]
                    rmu = cr.g1 * C4.symbols[a] + cr.g2 * C4.symbols[b]
                    w = math.exp(-abs(y1 - mu) ** 2 / lc.n0) \
                        * brute_cell_mass(xr, rmu, lc.n0, dq.d, CP1)
                    num, den = (num + w, den) if C4.labels[a, i] else (num, den + w)
            post = num / (num + den)
            worst_p = max(worst_p, abs(1.0 / (1.0 + math.exp(-lam[i])) - post))
    checks.append(("LLR-posterior brute-force agreement", worst_p < 1e-6,
                   f"max diff = {worst_p:.1e}"))

    # decoder noiseless fixed point
    code = ldpc.construct(96, seed=5)
    cw = code.encode(rng.integers(0, 2, code.k))
    bits, conv, iters = ldpc.decode_spa(code, 50.0 * (2.0 * cw - 1.0))
    checks.append(("decoder noiseless fixed point",
                   conv and iters == 1 and bool(np.array_equal(bits, cw)), ""))

    # interleaver bijectivity
    iv = Interleaver(length=4000, seed=8)
    data = rng.integers(0, 2, 4000)
    checks.append(("interleaver bijectivity",
                   bool(np.array_equal(deinterleave(interleave(data, iv), iv), data)), ""))

    # byte-identical outputs across thread counts
    bodies = []
    for threads in (1, 2):
        cfg = ExperimentConfig(kind="ber", snr_db_list=[20.0, 8.0], r0=1, m1=4, m2=4,
                               block_length=96, max_frames=24, target_frame_errors=6,
                               seed=9, threads=threads).validate()
        header, rows = harness.run(cfg)
        buf = io.StringIO()
        harness._write_csv(cfg, header, rows, buf)
        bodies.append(buf.getvalue().split("\n", 1)[1])
    rates_vals = []
    for threads in (1, 2):
        est = matched_rate(_link(11.0, r0=1), C4, C4, relay=True, samples=1024,
                           rng=4, threads=threads)
        rates_vals.append(est)
    checks.append(("byte-identical outputs across thread counts",
                   bodies[0] == bodies[1] and rates_vals[0] == rates_vals[1], ""))

    ok = all(c[1] for c in checks)
    detail = "; ".join(f"{name}: {'ok' if good else 'FAIL ' + extra}"
                       for name, good, extra in checks)
    assert _line(8, "property suites", ok, detail)
