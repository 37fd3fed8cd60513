"""End-to-end BICM frame: encode, interleave, map, cross the interference
channel with per-symbol fading, demap with relay-enhanced LLRs, decode.

All randomness (message, interleaver, interference, fading, noise) is drawn
before any relay processing, in a fixed order, so frames with the relay on
and off under one seed see the identical channel; the relay only adds its
symbol stream to the demapper.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import LinkConfig, sample_realization, transmit
from .ldpc import decode_spa
from .metrics import matched_llr, mismatched_llr
from .modem import Interleaver, build_constellation, deinterleave, interleave, map_bits
from .relay import build_partition, optimize_d_batch, optimize_gaussian_scale, quantize


@dataclass(frozen=True)
class FrameParams:
    """One BER experiment point for user 1."""

    snr_db: float
    r0: int = 0
    m1: int = 4
    m2: Optional[int] = 4          # None: Gaussian interference
    metric: str = "matched"
    block_fading: bool = False
    max_iters: int = 50
    d_objective: str = "max-mi"

    def __post_init__(self):
        if self.metric not in ("matched", "mismatched"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.metric == "matched" and self.m2 is None:
            raise ValueError("matched decoding needs the interference constellation")
        if self.r0 not in (0, 1, 2):
            raise ValueError(f"unsupported relay rate {self.r0}")

    def link(self):
        return LinkConfig(p1=1.0, p2=1.0, n0=10.0 ** (-self.snr_db / 10.0), r0=self.r0)


@dataclass(frozen=True)
class FrameResult:
    bit_errors: int
    frame_error: bool
    iters: int
    snr_db: float


def run_frame(code, params, rng, details=False):
    """Simulate one coded frame of user 1; returns a FrameResult.

    With details=True also returns a dict holding the relay symbol stream,
    the per-symbol scales and the channel draws (used by invariant tests).
    """
    c1 = build_constellation(params.m1)
    k1 = c1.bits_per_symbol
    if code.n % k1:
        raise ValueError(f"block length {code.n} not a multiple of {k1} label bits")
    c2 = build_constellation(params.m2) if params.m2 is not None else None
    lc = params.link()
    n_sym = code.n // k1

    message = rng.integers(0, 2, code.k).astype(np.uint8)
    codeword = code.encode(message)
    iv = Interleaver(length=code.n, seed=int(rng.integers(1 << 63)))
    tx_bits = interleave(codeword, iv)
    sym_idx = map_bits(tx_bits, c1)
    x1 = c1.symbols[sym_idx]
    if c2 is not None:
        x2 = c2.symbols[rng.integers(0, c2.order, n_sym)]
    else:
        x2 = (rng.standard_normal(n_sym) + 1j * rng.standard_normal(n_sym)) * np.sqrt(0.5)
    cr = sample_realization(rng, size=None if params.block_fading else n_sym)
    y1, _, yr = transmit(x1, x2, cr, lc, rng)

    xr, d, partition = None, None, None
    if params.r0 > 0:
        partition = build_partition(params.r0)
        if c2 is not None:
            d = optimize_d_batch(cr.g1, cr.g2, lc, c1, c2, partition, params.d_objective)["d"]
        else:
            d = optimize_gaussian_scale(cr.g1, cr.g2, lc, partition).astype(np.complex128)
        if params.block_fading:
            d = complex(d[0])
        xr = quantize(yr, d, partition)

    if params.metric == "matched":
        llr_sym = matched_llr(y1, xr, cr, lc, c1, c2, d, partition)
    else:
        llr_sym = mismatched_llr(y1, xr, cr, lc, c1, d, partition)
    llrs = deinterleave(llr_sym.reshape(-1), iv)
    decoded, converged, iters = decode_spa(code, llrs, params.max_iters)
    errors = int(np.sum(decoded[code.message_positions] != message))
    result = FrameResult(bit_errors=errors, frame_error=errors > 0,
                         iters=iters, snr_db=params.snr_db)
    if details:
        return result, {"xr": xr, "d": d, "cr": cr, "y1": y1, "sym_idx": sym_idx,
                        "message": message, "converged": converged}
    return result
