"""Fused scalar kernels for the relay-scale search.

These mirror the vectorized fold/entropy pipeline in relay.py exactly
(same window/series switch, same truncation) but keep each (realization,
candidate) evaluation in registers, which is what makes per-symbol scale
optimization affordable.  relay.py's numpy implementation stays the
reference; tests assert agreement to float precision.
"""

import math

import numpy as np
from numba import njit

_SQRT2 = math.sqrt(2.0)
_LN2 = math.log(2.0)
_SERIES_SWITCH = 0.3
_WINDOW_HALF = 3                      # ceil(6 * 0.3) + 1 cells either side


@njit(cache=True, fastmath={"contract", "arcp", "nsz"})
def _fold_scalar(c, s, L, out):
    """Masses of round(N(c, s^2)) mod L into out[:L]."""
    for u in range(L):
        out[u] = 0.0
    if s < 1e-12:
        r = math.floor(abs(c) + 0.5)
        if c < 0.0:
            r = -r
        out[int(r) % L] = 1.0
        return
    if s <= _SERIES_SWITCH:
        # window sized to keep the truncated tail below 1e-15
        if s > 0.15:
            w = _WINDOW_HALF
        elif s > 0.08:
            w = 2
        else:
            w = 1
        r = int(math.floor(c + 0.5))
        inv = 1.0 / (s * _SQRT2)
        prev = 0.5 * math.erfc(-((r - w - 0.5) - c) * inv)
        for k in range(-w, w + 1):
            cur = 0.5 * math.erfc(-((r + k + 0.5) - c) * inv)
            out[(r + k) % L] += cur - prev
            prev = cur
        return
    w0 = 2.0 * math.pi / L
    g = math.exp(-2.0 * (math.pi / L) ** 2 * s * s)
    g_sq = g * g
    n_terms = int(math.ceil(1.35 * L / s))
    if n_terms < 1:
        n_terms = 1
    step_re = math.cos(w0 * c)
    step_im = math.sin(w0 * c)
    e_re, e_im = step_re, step_im
    gauss = g
    g_odd = g
    for u in range(L):
        out[u] = 1.0 / L
    for j in range(1, n_terms + 1):
        if j % L:
            coef = 2.0 * math.sin(math.pi * j / L) / (math.pi * j) * gauss
            jm = j % 4
            for u in range(L):
                # cos/sin(w0*j*u) with w0*L = 2*pi lie on the quarter circle
                t = (jm * u * (4 // L)) % 4
                if t == 0:
                    cju, sju = 1.0, 0.0
                elif t == 1:
                    cju, sju = 0.0, 1.0
                elif t == 2:
                    cju, sju = -1.0, 0.0
                else:
                    cju, sju = 0.0, -1.0
                out[u] += coef * (e_re * cju + e_im * sju)
        nr = e_re * step_re - e_im * step_im
        e_im = e_re * step_im + e_im * step_re
        e_re = nr
        g_odd *= g_sq
        gauss *= g_odd
    for u in range(L):
        if out[u] < 0.0:
            out[u] = 0.0


@njit(cache=True)
def grid_entropies(m_re, m_im, w_plus, w_minus, negperm, n_pairs, var,
                   d_re, d_im, lx, mx, ly, my, L, hc, hm):
    """H(X_r|X1,X2) and H(X_r) in bits for every (realization, candidate).

    m_re/m_im: (R, n_orb) orbit-representative means; d_re/d_im: (R, P)
    scale candidates; outputs hc, hm: (R, P).
    """
    n_real, n_orb = m_re.shape
    n_cand = d_re.shape[1]
    gx = np.empty(4)
    gy = np.empty(4)
    pmf = np.empty(4)
    mix = np.empty(4)
    for r in range(n_real):
        for p in range(n_cand):
            dre = d_re[r, p]
            dim = d_im[r, p]
            dab = dre * dre + dim * dim
            s = math.sqrt(var * 0.5 / dab)
            ire = dre / dab
            iim = -dim / dab
            h_cond = 0.0
            for l in range(L):
                mix[l] = 0.0
            for o in range(n_orb):
                zre = m_re[r, o] * ire - m_im[r, o] * iim
                zim = m_re[r, o] * iim + m_im[r, o] * ire
                _fold_scalar(zre, s, lx, gx)
                _fold_scalar(zim, s, ly, gy)
                for l in range(L):
                    pmf[l] = 0.0
                for tx in range(lx):
                    rx = (mx * tx) % L
                    for ty in range(ly):
                        pmf[(rx + my * ty) % L] += gx[tx] * gy[ty]
                tot = 0.0
                for l in range(L):
                    tot += pmf[l]
                h = 0.0
                for l in range(L):
                    pmf[l] /= tot
                    if pmf[l] > 0.0:
                        h -= pmf[l] * math.log(pmf[l])
                h_cond += (w_plus[o] + w_minus[o]) * h
                for l in range(L):
                    mix[l] += w_plus[o] * pmf[l] + w_minus[o] * pmf[negperm[l]]
            hc[r, p] = h_cond / (n_pairs * _LN2)
            h = 0.0
            for l in range(L):
                q = mix[l] / n_pairs
                if q > 0.0:
                    h -= q * math.log(q)
            hm[r, p] = h / _LN2
