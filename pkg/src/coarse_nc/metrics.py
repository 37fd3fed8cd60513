"""Per-bit LLRs at destination 1, with and without the relay symbol.

The matched metric marginalizes the exact pair likelihood
p(y1, x_r | x1, x2) = p(y1 | x1, x2) * P(x_r | x1, x2) over the true
interference constellation.  The mismatched metric models the
interference as Gaussian of equal power and uses the induced conditional
law of the relay observation given (x1, y1); it never touches the
interferer's alphabet.  All sums run in the log domain (log-sum-exp);
a sign of +1 means bit = 1.

Channel-gain arguments may be scalars or per-symbol arrays (fast fading),
and y1 / x_r accept batches, so one call demaps a whole frame.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .relay import label_distribution, _as_d

LLR_CLIP = 50.0
_LOG_FLOOR = np.log(1e-300)


@dataclass(frozen=True)
class LlrVector:
    """Natural-log per-bit LLRs for one symbol, clipped to +-50."""

    values: np.ndarray

    def __post_init__(self):
        self.values.flags.writeable = False


def _select_label_mass(pmf, x_r, batch_axes):
    """Gather P(x_r) from a label pmf, broadcasting batch dims as needed.

    pmf has shape (..., *inner, L); x_r has the batch shape.  batch_axes is
    the number of inner axes (candidate-symbol dims) to the right of the
    batch dims in the output.
    """
    idx = np.asarray(x_r).reshape(np.shape(x_r) + (1,) * batch_axes)
    shape = np.broadcast_shapes(pmf.shape[:-1], idx.shape)
    pmf_b = np.broadcast_to(pmf, shape + pmf.shape[-1:])
    idx_b = np.broadcast_to(idx[..., None], shape + (1,))
    return np.take_along_axis(pmf_b, idx_b, axis=-1)[..., 0]


def _bit_llrs_from_symbol_logs(log_metric, constellation):
    """Reduce per-candidate-symbol logs (..., M) to per-bit LLRs (..., k)."""
    k = constellation.bits_per_symbol
    labels = constellation.labels               # (M, k)
    out = np.empty(log_metric.shape[:-1] + (k,))
    for i in range(k):
        ones = labels[:, i] == 1
        num = logsumexp(log_metric[..., ones], axis=-1)
        den = logsumexp(log_metric[..., ~ones], axis=-1)
        out[..., i] = np.maximum(num, _LOG_FLOOR) - np.maximum(den, _LOG_FLOOR)
    return np.clip(out, -LLR_CLIP, LLR_CLIP)


def matched_symbol_logs(y1, x_r, cr, lc, c1, c2, scale=None, partition=None):
    """log p(y1, x_r | x1, x2) up to a constant, shape (..., M1, M2).

    With x_r None (no relay) the relay factor is omitted.  y1 may be an
    array; gains and the scale broadcast against it.
    """
    y1 = np.asarray(y1, dtype=np.complex128)
    s1 = np.sqrt(lc.p1) * c1.symbols
    s2 = np.sqrt(lc.p2) * c2.symbols
    mu = np.multiply.outer(np.asarray(cr.h11), s1)[..., :, None] \
        + np.multiply.outer(np.asarray(cr.h21), s2)[..., None, :]
    logs = -np.abs(y1[..., None, None] - mu) ** 2 / lc.n0
    if x_r is not None:
        relay_mu = np.multiply.outer(np.asarray(cr.g1), s1)[..., :, None] \
            + np.multiply.outer(np.asarray(cr.g2), s2)[..., None, :]
        d = np.asarray(_as_d(scale))
        pmf = label_distribution(relay_mu, lc.n0, d.reshape(d.shape + (1, 1)), partition)
        mass = _select_label_mass(pmf, x_r, batch_axes=2)
        with np.errstate(divide="ignore"):
            logs = logs + np.log(mass)
    return logs


def matched_llr(y1, x_r, cr, lc, c1, c2, scale=None, partition=None):
    """Matched per-bit LLRs for user 1's symbol; x_r None = no relay."""
    logs = matched_symbol_logs(y1, x_r, cr, lc, c1, c2, scale, partition)
    per_x1 = logsumexp(logs, axis=-1)           # marginalize interference
    vals = _bit_llrs_from_symbol_logs(per_x1, c1)
    if np.ndim(y1) == 0:
        return LlrVector(values=vals.reshape(-1))
    return vals


def gaussian_interference_posterior(x1_scaled, y1, cr, lc):
    """Conditional law of Y_r given (X1, Y1) when X2 is modeled Gaussian.

    x1_scaled is sqrt(P1)*x1 (broadcastable against y1).  Returns (mu,
    var): the relay observation is CN(mu, var) under the Gaussian
    interference model, which is exact when X2 really is Gaussian.
    """
    h21p = np.abs(cr.h21) ** 2 * lc.p2 + lc.n0
    mu = cr.g1 * x1_scaled + (cr.g2 * np.conj(cr.h21) * lc.p2 / h21p) * (y1 - cr.h11 * x1_scaled)
    var = lc.n0 + np.abs(cr.g2) ** 2 * lc.p2 * lc.n0 / h21p
    return mu, var


def mismatched_symbol_logs(y1, x_r, cr, lc, c1, scale=None, partition=None):
    """log q(y1, x_r | x1) up to a constant, shape (..., M1).

    q = q1(y1|x1) * q_r(x_r|x1,y1): a Gaussian-interference channel
    density times the cell mass of the induced relay-observation law.
    The additive constant is chosen so the metric is the exact log density
    when the interference really is Gaussian (used by the GMI estimator).
    """
    y1 = np.asarray(y1, dtype=np.complex128)
    s1 = np.sqrt(lc.p1) * c1.symbols
    h21p = np.abs(cr.h21) ** 2 * lc.p2 + lc.n0
    resid = y1[..., None] - np.asarray(cr.h11)[..., None] * s1
    logs = -np.abs(resid) ** 2 / np.asarray(h21p)[..., None] - np.log(np.pi * h21p)[..., None]
    if x_r is not None:
        cr_b = _Broadcast(cr, extra_axis=True)
        mu, var = gaussian_interference_posterior(s1, y1[..., None], cr_b, lc)
        d = np.asarray(_as_d(scale))
        pmf = label_distribution(mu, var, d.reshape(d.shape + (1,)), partition)
        mass = _select_label_mass(pmf, x_r, batch_axes=1)
        with np.errstate(divide="ignore"):
            logs = logs + np.log(mass)
    return logs


class _Broadcast:
    """View of a realization with gain arrays extended by one axis."""

    def __init__(self, cr, extra_axis):
        for name in ("h11", "h12", "h21", "h22", "g1", "g2"):
            val = np.asarray(getattr(cr, name))
            setattr(self, name, val[..., None] if extra_axis else val)


def mismatched_llr(y1, x_r, cr, lc, c1, scale=None, partition=None):
    """Mismatched per-bit LLRs (interference treated as Gaussian)."""
    logs = mismatched_symbol_logs(y1, x_r, cr, lc, c1, scale, partition)
    vals = _bit_llrs_from_symbol_logs(logs, c1)
    if np.ndim(y1) == 0:
        return LlrVector(values=vals.reshape(-1))
    return vals
