"""Regular (3,6) LDPC codes: random-graph construction, systematic encoding
via GF(2) elimination, and flooding sum-product decoding.

LLR sign convention matches the demappers: positive means bit = 1.  With
even check degree the tanh product rule is unchanged by this convention.
"""

from dataclasses import dataclass, field

import numpy as np

VAR_DEGREE = 3
CHECK_DEGREE = 6
MSG_CLIP = 50.0
_TANH_CLIP = 1.0 - 1e-15
_MAX_SWAP_PASSES = 100
_MAX_REDRAWS = 50


class ConstructionError(RuntimeError):
    pass


@dataclass(frozen=True)
class LdpcCode:
    """Sparse (3,6) parity-check structure plus its systematic encoder form.

    Edges are stored check-major: edge e belongs to check e // 6 and touches
    variable edge_var[e].  The encoder writes the k = n/2 message bits into
    the first free columns of the reduced parity-check matrix (any extra
    rank-deficiency freedom is frozen to zero) and solves for pivot bits.
    """

    n: int
    m: int
    seed: int
    edge_var: np.ndarray                   # (3n,) variable of each check-major edge
    pivot_cols: np.ndarray                 # (rank,)
    free_cols: np.ndarray                  # (n - rank,)
    parity_map: np.ndarray = field(repr=False, default=None)   # (rank, n-rank) float32
    var_edge_pos: np.ndarray = field(repr=False, default=None)  # (n, 3)

    @property
    def k(self):
        return self.n // 2

    @property
    def rank(self):
        return self.pivot_cols.size

    @property
    def rate(self):
        return (self.n - self.rank) / self.n

    @property
    def message_positions(self):
        return self.free_cols[:self.k]

    def encode(self, message):
        """Systematic encode of an n/2-bit message to an n-bit codeword."""
        message = np.asarray(message, dtype=np.uint8)
        if message.size != self.k:
            raise ValueError(f"message length {message.size} != k = {self.k}")
        free_vals = np.zeros(self.free_cols.size, dtype=np.float32)
        free_vals[:self.k] = message
        word = np.zeros(self.n, dtype=np.uint8)
        word[self.free_cols] = free_vals.astype(np.uint8)
        word[self.pivot_cols] = (self.parity_map @ free_vals).astype(np.int64) & 1
        return word

    def syndrome_ok(self, bits):
        """True when H @ bits = 0 over GF(2)."""
        per_check = np.asarray(bits)[self.edge_var].reshape(self.m, CHECK_DEGREE)
        return not np.any(per_check.sum(axis=1) & 1)


def _match_sockets(n, rng):
    """One Gallager-ensemble socket permutation; may contain double edges."""
    var_sockets = np.repeat(np.arange(n), VAR_DEGREE)
    return var_sockets[rng.permutation(VAR_DEGREE * n)]


def _resolve_double_edges(edge_var, m, rng):
    """Swap sockets until every (check, var) pair is unique; None on failure."""
    edge_var = edge_var.copy()
    n_edges = edge_var.size
    checks = np.arange(n_edges) // CHECK_DEGREE
    for _ in range(_MAX_SWAP_PASSES):
        keys = edge_var.astype(np.int64) * m + checks
        order = np.argsort(keys, kind="stable")
        dup = np.flatnonzero(keys[order][1:] == keys[order][:-1])
        if dup.size == 0:
            return edge_var
        bad = order[dup + 1]
        partners = rng.integers(0, n_edges, bad.size)
        for a, b in zip(bad, partners):       # sequential: swaps may collide
            edge_var[a], edge_var[b] = edge_var[b], edge_var[a]
    return None


def _rref_encoder(edge_var, n, m):
    """Column-pivot Gaussian elimination on the packed parity-check matrix."""
    width = (n + 7) // 8
    hp = np.zeros((m, width), dtype=np.uint8)
    checks = np.arange(edge_var.size) // CHECK_DEGREE
    # bitwise_or.at handles several edges of one check landing in one byte
    np.bitwise_or.at(hp, (checks, edge_var >> 3), (128 >> (edge_var & 7)).astype(np.uint8))

    rank = 0
    pivot_cols = []
    for col in range(n):
        byte, bit = col >> 3, 128 >> (col & 7)
        col_bits = (hp[:, byte] & bit) != 0
        cand = np.flatnonzero(col_bits[rank:])
        if cand.size == 0:
            continue
        r = rank + cand[0]
        if r != rank:
            hp[[rank, r]] = hp[[r, rank]]
            col_bits[[rank, r]] = col_bits[[r, rank]]
        col_bits[rank] = False
        hp[col_bits] ^= hp[rank]
        pivot_cols.append(col)
        rank += 1
        if rank == m:
            break
    pivot_cols = np.array(pivot_cols, dtype=np.int64)
    free_cols = np.setdiff1d(np.arange(n), pivot_cols)
    rows = np.unpackbits(hp[:rank], axis=1, count=n)
    parity_map = rows[:, free_cols].astype(np.float32)
    return pivot_cols, free_cols, parity_map


def construct(n, seed):
    """Draw a regular (3,6) code of even block length n >= 96.

    Variable sockets are matched to check sockets by a seeded permutation;
    double edges are removed by local socket swaps, redrawing the whole
    permutation if swaps stall.
    """
    if n < 96 or n % 2:
        raise ValueError(f"block length must be even and >= 96, got {n}")
    m = n // 2
    for redraw in range(_MAX_REDRAWS):
        rng = np.random.default_rng([seed, redraw])
        edge_var = _resolve_double_edges(_match_sockets(n, rng), m, rng)
        if edge_var is not None:
            break
    else:
        raise ConstructionError(f"no simple-graph matching after {_MAX_REDRAWS} redraws (seed={seed})")
    pivot_cols, free_cols, parity_map = _rref_encoder(edge_var, n, m)
    var_edge_pos = np.argsort(edge_var, kind="stable").reshape(n, VAR_DEGREE)
    return LdpcCode(n=n, m=m, seed=seed, edge_var=edge_var, pivot_cols=pivot_cols,
                    free_cols=free_cols, parity_map=parity_map, var_edge_pos=var_edge_pos)


def check_extrinsic(v2c):
    """Tanh-rule check-node update on (m, 6) incoming messages."""
    t = np.tanh(v2c / 2.0)
    pref = np.ones_like(t)
    suf = np.ones_like(t)
    np.cumprod(t[:, :-1], axis=1, out=pref[:, 1:])
    np.cumprod(t[:, :0:-1], axis=1, out=suf[:, -2::-1])
    prod = np.clip(pref * suf, -_TANH_CLIP, _TANH_CLIP)
    return np.clip(2.0 * np.arctanh(prod), -MSG_CLIP, MSG_CLIP)


def decode_spa(code, llrs, max_iters=50):
    """Flooding sum-product decoding of channel LLRs (positive = bit 1).

    Returns (hard_bits, converged, iterations).  Convergence means every
    check is satisfied with no exactly-zero posterior (an all-zero input
    stays undecided); non-convergence returns the current hard decision.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    llrs = np.asarray(llrs, dtype=np.float64)
    if llrs.size != code.n:
        raise ValueError(f"LLR length {llrs.size} != block length {code.n}")
    pos = code.var_edge_pos
    c2v = np.zeros(code.edge_var.size)
    v2c = np.empty_like(c2v)
    hard = llrs > 0
    iters = max_iters
    for it in range(max_iters):
        inc = c2v[pos]                                    # (n, 3)
        post = llrs + inc.sum(axis=1)
        v2c[pos] = np.clip(post[:, None] - inc, -MSG_CLIP, MSG_CLIP)
        c2v = check_extrinsic(v2c.reshape(code.m, CHECK_DEGREE)).ravel()
        post = llrs + c2v[pos].sum(axis=1)
        hard = post > 0
        if code.syndrome_ok(hard) and not np.any(post == 0.0):
            iters = it + 1
            return hard.astype(np.uint8), True, iters
    return hard.astype(np.uint8), False, iters


def export_coordinates(code, path):
    """Write the sparse parity-check structure as 'n m' then 'row col' lines."""
    checks = np.arange(code.edge_var.size) // CHECK_DEGREE
    order = np.lexsort((code.edge_var, checks))
    with open(path, "w") as fh:
        fh.write(f"{code.n} {code.m}\n")
        for e in order:
            fh.write(f"{checks[e]} {code.edge_var[e]}\n")


def import_coordinates(path):
    """Rebuild a code (and its encoder) from coordinate text format."""
    with open(path) as fh:
        n, m = map(int, fh.readline().split())
        pairs = np.array([[int(t) for t in line.split()] for line in fh if line.strip()],
                         dtype=np.int64)
    if pairs.shape[0] != VAR_DEGREE * n or m != n // 2:
        raise ValueError("coordinate file is not a regular (3,6) structure")
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    pairs = pairs[order]
    expected = np.repeat(np.arange(m), CHECK_DEGREE)
    if not np.array_equal(pairs[:, 0], expected):
        raise ValueError("row degrees are not all 6")
    edge_var = pairs[:, 1]
    counts = np.bincount(edge_var, minlength=n)
    if not np.all(counts == VAR_DEGREE):
        raise ValueError("column degrees are not all 3")
    pivot_cols, free_cols, parity_map = _rref_encoder(edge_var, n, m)
    var_edge_pos = np.argsort(edge_var, kind="stable").reshape(n, VAR_DEGREE)
    return LdpcCode(n=n, m=m, seed=-1, edge_var=edge_var, pivot_cols=pivot_cols,
                    free_cols=free_cols, parity_map=parity_map, var_edge_pos=var_edge_pos)
