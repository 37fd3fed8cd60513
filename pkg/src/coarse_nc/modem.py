"""Square-QAM constellations with Gray labeling and the BICM bit interleaver."""

from dataclasses import dataclass, field

import numpy as np

SUPPORTED_ORDERS = (4, 16, 64)


@dataclass(frozen=True)
class Constellation:
    """M-ary square QAM alphabet, unit average power, Gray bit labels.

    ``symbols[j]`` is the complex point whose label is row ``j`` of
    ``labels`` (shape ``(M, k)``, entries 0/1).  The first ``k/2`` label
    bits address the I axis, the rest the Q axis, each axis reflected-Gray
    coded, so nearest neighbours along either axis differ in one bit.
    """

    order: int
    bits_per_symbol: int
    symbols: np.ndarray
    labels: np.ndarray
    _index_of_label: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        self.symbols.flags.writeable = False
        self.labels.flags.writeable = False
        self._index_of_label.flags.writeable = False

    def label_strings(self):
        """Labels as k-character bit strings, one per symbol."""
        return ["".join(str(b) for b in row) for row in self.labels]

    def symbols_for_labels(self, label_ints):
        """Symbol indices for integer labels (MSB-first bit packing)."""
        return self._index_of_label[np.asarray(label_ints)]


def _reflected_gray(nbits):
    i = np.arange(1 << nbits)
    return i ^ (i >> 1)


def build_constellation(M):
    """Build the Gray-labeled unit-power square QAM constellation.

    Supported orders are 4, 16 and 64.  Per-axis amplitude levels are the
    odd integers ±1, ±3, ... scaled so the average symbol power is exactly
    one; transmit power enters later as an external scale.
    """
    if M not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported constellation order {M}; expected one of {SUPPORTED_ORDERS}")
    k = int(np.log2(M))
    ka = k // 2                       # bits per axis
    L = 1 << ka                       # levels per axis
    levels = 2.0 * np.arange(L) - (L - 1)
    scale = np.sqrt(np.mean(levels**2) * 2.0)
    gray = _reflected_gray(ka)

    # level_of_bits[g] = amplitude index whose Gray code is g
    level_of_bits = np.empty(L, dtype=np.int64)
    level_of_bits[gray] = np.arange(L)

    symbols = np.empty(M, dtype=np.complex128)
    labels = np.empty((M, k), dtype=np.uint8)
    index_of_label = np.empty(M, dtype=np.int64)
    for j in range(M):
        bi, bq = j >> ka, j & (L - 1)          # label split I/Q, MSB-first
        symbols[j] = (levels[level_of_bits[bi]] + 1j * levels[level_of_bits[bq]]) / scale
        for t in range(k):
            labels[j, t] = (j >> (k - 1 - t)) & 1
        index_of_label[j] = j
    return Constellation(order=M, bits_per_symbol=k, symbols=symbols,
                         labels=labels, _index_of_label=index_of_label)


def bit_extract(constellation, symbol_index, i):
    """Bit ``i`` of the Gray label of symbol ``symbol_index``."""
    k = constellation.bits_per_symbol
    if not 0 <= i < k:
        raise IndexError(f"bit position {i} out of range for {k}-bit labels")
    if not 0 <= symbol_index < constellation.order:
        raise IndexError(f"symbol index {symbol_index} out of range")
    return int(constellation.labels[symbol_index, i])


def map_bits(bits, constellation):
    """Map a 0/1 array (length divisible by k) to symbol indices."""
    k = constellation.bits_per_symbol
    bits = np.asarray(bits)
    if bits.size % k:
        raise ValueError(f"bit count {bits.size} not divisible by {k}")
    groups = bits.reshape(-1, k)
    ints = groups @ (1 << np.arange(k)[::-1])
    return constellation.symbols_for_labels(ints)


def unmap_symbols(indices, constellation):
    """Inverse of :func:`map_bits`: symbol indices back to the bit stream."""
    return constellation.labels[np.asarray(indices)].reshape(-1).copy()


@dataclass(frozen=True)
class Interleaver:
    """Seeded random bit permutation applied per codeword."""

    length: int
    seed: int
    permutation: np.ndarray = None

    def __post_init__(self):
        if self.permutation is None:
            perm = np.random.default_rng(self.seed).permutation(self.length)
            object.__setattr__(self, "permutation", perm)
        self.permutation.flags.writeable = False


def interleave(bits, iv):
    bits = np.asarray(bits)
    if bits.size != iv.length:
        raise ValueError(f"input length {bits.size} != interleaver length {iv.length}")
    return bits[iv.permutation]


def deinterleave(bits, iv):
    bits = np.asarray(bits)
    if bits.size != iv.length:
        raise ValueError(f"input length {bits.size} != interleaver length {iv.length}")
    out = np.empty_like(bits)
    out[iv.permutation] = bits
    return out
