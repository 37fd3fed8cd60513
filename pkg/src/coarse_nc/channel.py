"""Fading realizations and the two-user interference channel with a relay tap.

All alphabets are unit power; transmit powers enter as sqrt(P) scales inside
:func:`transmit`, so SNR in dB is 10*log10(P/N0) throughout.
"""

from dataclasses import dataclass

import numpy as np

# |g1*h21 - g2*h11| below this is treated as rank deficient: the relay
# observation is then statistically redundant given the direct output.
FULL_RANK_TOL = 1e-9


@dataclass(frozen=True)
class ChannelRealization:
    """Six complex gains of one fading slot (fields may be equal-length arrays)."""

    h11: complex
    h12: complex
    h21: complex
    h22: complex
    g1: complex
    g2: complex

    def cross_determinant(self):
        """g1*h21 - g2*h11; zero means the relay adds nothing for user 1."""
        return self.g1 * self.h21 - self.g2 * self.h11

    def is_full_rank(self):
        return np.abs(self.cross_determinant()) >= FULL_RANK_TOL


@dataclass(frozen=True)
class LinkConfig:
    """Transmit powers, total complex noise variance and the relay rate."""

    p1: float
    p2: float
    n0: float
    r0: int

    def __post_init__(self):
        if self.p1 <= 0 or self.p2 <= 0 or self.n0 <= 0:
            raise ValueError("powers and noise variance must be positive")
        if self.r0 not in (0, 1, 2):
            raise ValueError(f"relay rate r0={self.r0} unsupported; expected 0, 1 or 2")

    @property
    def snr_db(self):
        return 10.0 * np.log10(self.p1 / self.n0)

    @classmethod
    def from_snr_db(cls, snr_db, r0=0, p=1.0):
        """Equal-power link at the given SNR: P1 = P2 = p, N0 = p*10^(-SNR/10)."""
        return cls(p1=p, p2=p, n0=p * 10.0 ** (-snr_db / 10.0), r0=r0)


def _cn(rng, var, size=None):
    """Circularly symmetric complex Gaussian draws with E|.|^2 = var."""
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def sample_realization(rng, size=None):
    """Draw i.i.d. unit-variance complex Gaussian gains (0.5 per real dim).

    With ``size`` set, every field is an array of that shape; all channel
    operations broadcast, so such a "vector realization" models per-symbol
    fast fading directly.
    """
    draws = [_cn(rng, 1.0, size) for _ in range(6)]
    return ChannelRealization(h11=draws[0], h12=draws[1], h21=draws[2],
                              h22=draws[3], g1=draws[4], g2=draws[5])


def transmit(x1, x2, cr, lc, rng):
    """One channel use: returns (y1, y2, yr).

    x1, x2 are unit-power alphabet points (scalars or arrays); noise terms
    are i.i.d. complex Gaussian with E|n|^2 = N0.
    """
    x1 = np.asarray(x1)
    s1 = np.sqrt(lc.p1) * x1
    s2 = np.sqrt(lc.p2) * np.asarray(x2)
    y1 = cr.h11 * s1 + cr.h21 * s2 + _cn(rng, lc.n0, x1.shape)
    y2 = cr.h22 * s2 + cr.h12 * s1 + _cn(rng, lc.n0, x1.shape)
    yr = cr.g1 * s1 + cr.g2 * s2 + _cn(rng, lc.n0, x1.shape)
    return y1, y2, yr
