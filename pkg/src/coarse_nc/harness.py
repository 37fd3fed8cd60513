"""Experiment configuration, sweep orchestration and CSV emission.

Every output file starts with a '#'-prefixed JSON header carrying the fully
resolved configuration and the tool version, so any row can be traced back
to its exact run.  Work units are keyed by deterministic indices; results
are byte-identical for any --threads value.
"""

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .channel import LinkConfig, sample_realization
from .infotheory import asymptotics_sweep, gaussian_input_rate, gmi_rate, matched_rate
from .ldpc import construct
from .modem import build_constellation
from .relay import build_partition, optimize_d_report
from .transceiver import FrameParams, run_frame

KINDS = ("rates", "gmi", "ber", "optimize-d", "asymptotics", "table1")
_FRAME_BATCH = 64          # fixed batch granularity keeps stopping rules
                           # independent of the worker count


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    snr_db_list: list = field(default_factory=list)
    r0: int = 0
    m1: int = 4
    m2: Optional[int] = 4
    gaussian_x2: bool = False
    gaussian_x1: bool = False
    metric: str = "matched"
    block_length: int = 4000
    max_frames: int = 10000
    target_frame_errors: int = 100
    max_iters: int = 50
    samples: int = 100000
    realizations: int = 20000
    alpha: float = 0.25
    n0_list: list = field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
    threshold: float = 1.5
    objective: str = "max-mi"
    seed: int = 0
    threads: int = 1
    out: Optional[str] = None

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.r0 not in (0, 1, 2):
            raise ConfigError(f"r0 must be 0, 1 or 2, got {self.r0}")
        if self.m1 not in (4, 16, 64):
            raise ConfigError(f"m1 must be 4, 16 or 64, got {self.m1}")
        if self.m2 is not None and self.m2 not in (4, 16, 64):
            raise ConfigError(f"m2 must be 4, 16 or 64, got {self.m2}")
        if self.gaussian_x2 and self.m2 is not None:
            raise ConfigError("m2 and gaussian_x2 are mutually exclusive; set exactly one")
        if not self.gaussian_x2 and self.m2 is None:
            raise ConfigError("interference law missing: set m2 or gaussian_x2")
        if self.metric not in ("matched", "mismatched"):
            raise ConfigError(f"metric must be matched or mismatched, got {self.metric!r}")
        if self.kind in ("rates", "gmi", "ber") and not self.snr_db_list:
            raise ConfigError("snr_db_list must not be empty")
        if self.gaussian_x1 and not self.gaussian_x2:
            raise ConfigError("gaussian_x1 requires gaussian_x2")
        for name in ("block_length", "max_frames", "target_frame_errors", "max_iters",
                     "samples", "realizations"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.kind == "asymptotics":
            if not 0.0 < self.alpha < 0.5:
                raise ConfigError(f"alpha must lie in (0, 0.5), got {self.alpha}")
            if not self.n0_list:
                raise ConfigError("n0_list must not be empty")
        if self.kind == "ber":
            if self.metric == "matched" and self.gaussian_x2:
                raise ConfigError("matched decoding needs a discrete m2")
            k1 = int(np.log2(self.m1))
            if self.block_length % k1:
                raise ConfigError(f"block_length must be a multiple of {k1} (m1 label bits)")
        return self


_FIELD_TYPES = {f.name: f.type for f in ExperimentConfig.__dataclass_fields__.values()}


def _parse_snr_list(text):
    return [float(t) for t in str(text).replace(",", " ").split()]


def parse_config(argv=None, file_values=None):
    """CLI arguments (optionally over a JSON config file) -> ExperimentConfig.

    Flags override file values; unknown file keys are rejected.  The
    resolved config is echoed verbatim into every output header.
    """
    parser = argparse.ArgumentParser(
        prog="coarse-nc",
        description="Link-level experiments for the coset-quantizing relay "
                    "in a two-user interference channel.")
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--config", help="JSON file with config defaults")
    parser.add_argument("--snr-db-list", help="comma/space separated SNRs in dB")
    parser.add_argument("--r0", type=int)
    parser.add_argument("--m1", type=int)
    parser.add_argument("--m2", type=int)
    parser.add_argument("--gaussian-x2", action="store_true", default=None)
    parser.add_argument("--gaussian-x1", action="store_true", default=None,
                        help="Gaussian source inputs (rates kind only)")
    parser.add_argument("--metric", choices=("matched", "mismatched"))
    parser.add_argument("--block-length", type=int)
    parser.add_argument("--max-frames", type=int)
    parser.add_argument("--target-frame-errors", type=int)
    parser.add_argument("--max-iters", type=int)
    parser.add_argument("--samples", type=int)
    parser.add_argument("--realizations", type=int)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--n0-list")
    parser.add_argument("--threshold", type=float,
                        help="rate threshold in bits for table1 (1.0 or 1.5)")
    parser.add_argument("--objective", choices=("max-mi", "min-cond-entropy"))
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--out")
    ns = parser.parse_args(argv)

    values = {"kind": ns.kind}
    if file_values is None and ns.config:
        with open(ns.config) as fh:
            file_values = json.load(fh)
    if file_values:
        unknown = set(file_values) - set(_FIELD_TYPES)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(file_values)
    overrides = {
        "snr_db_list": _parse_snr_list(ns.snr_db_list) if ns.snr_db_list else None,
        "r0": ns.r0, "m1": ns.m1, "m2": ns.m2,
        "gaussian_x2": ns.gaussian_x2, "gaussian_x1": ns.gaussian_x1,
        "metric": ns.metric, "block_length": ns.block_length,
        "max_frames": ns.max_frames, "target_frame_errors": ns.target_frame_errors,
        "max_iters": ns.max_iters, "samples": ns.samples,
        "realizations": ns.realizations, "alpha": ns.alpha,
        "n0_list": _parse_snr_list(ns.n0_list) if ns.n0_list else None,
        "threshold": ns.threshold, "objective": ns.objective,
        "seed": ns.seed, "threads": ns.threads, "out": ns.out,
    }
    explicit = {k for k, v in overrides.items() if v is not None}
    values.update({k: overrides[k] for k in explicit})
    # --gaussian-x2 replaces the default interference constellation unless
    # m2 was set explicitly (then validation flags the conflict)
    if values.get("gaussian_x2") and "m2" not in explicit and "m2" not in (file_values or {}):
        values["m2"] = None
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def _write_csv(cfg, header_cols, rows, stream):
    meta = {"config": asdict(cfg), "version": __version__}
    stream.write("# " + json.dumps(meta, sort_keys=True) + "\n")
    stream.write(",".join(header_cols) + "\n")
    for row in rows:
        stream.write(",".join(_fmt(v) for v in row) + "\n")
        if hasattr(stream, "flush"):
            stream.flush()


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.10g}"
    return str(value)


# ----------------------------------------------------------------------
# ber
# ----------------------------------------------------------------------

def _frame_batch(job):
    (seed, snr_db, first_index, count, params_kw, block_length, code_seed, max_iters) = job
    code = _ber_code(block_length, code_seed)
    params = FrameParams(snr_db=snr_db, max_iters=max_iters, **params_kw)
    out = []
    for i in range(first_index, first_index + count):
        rng = np.random.default_rng([seed, int(round(snr_db * 1000)) & 0x7FFFFFFF, i])
        res = run_frame(code, params, rng)
        out.append((res.bit_errors, res.frame_error, res.iters))
    return out


_CODE_CACHE = {}


def _ber_code(block_length, code_seed):
    key = (block_length, code_seed)
    if key not in _CODE_CACHE:
        _CODE_CACHE[key] = construct(block_length, code_seed)
    return _CODE_CACHE[key]


def run_ber_sweep(cfg, pool=None, on_row=None):
    """BER/FER per SNR point, stopping at target_frame_errors or max_frames.

    on_row, when given, receives each completed row immediately so partial
    results survive interruption of long sweeps.
    """
    code = _ber_code(cfg.block_length, cfg.seed)
    params_kw = dict(r0=cfg.r0, m1=cfg.m1, m2=cfg.m2, metric=cfg.metric)
    rows = []
    for snr_db in cfg.snr_db_list:
        frames = bit_errors = frame_errors = iter_sum = 0
        while frames < cfg.max_frames and frame_errors < cfg.target_frame_errors:
            count = min(_FRAME_BATCH, cfg.max_frames - frames)
            job_args = [(cfg.seed, snr_db, frames + off, 1, params_kw,
                         cfg.block_length, cfg.seed, cfg.max_iters)
                        for off in range(count)]
            if pool is not None:
                batches = list(pool.map(_frame_batch, job_args, chunksize=4))
            else:
                batches = [_frame_batch(j) for j in job_args]
            for batch in batches:
                for errs, fe, iters in batch:
                    bit_errors += errs
                    frame_errors += fe
                    iter_sum += iters
            frames += count
        k = code.k
        row = (snr_db, frames, bit_errors, bit_errors / (frames * k),
               frame_errors / frames, iter_sum / frames)
        rows.append(row)
        if on_row is not None:
            on_row(row)
    return ["snr_db", "frames", "bit_errors", "ber", "fer", "mean_iters"], rows


# ----------------------------------------------------------------------
# rates / gmi
# ----------------------------------------------------------------------

def _rate_seed(seed, r0, snr_db):
    # r0 deliberately left out of the key: rate curves for different relay
    # rates then share fading ensembles at equal SNR (the relay branch
    # consumes no extra randomness), so curve differences are paired.
    del r0
    return [seed, int(round(snr_db * 1000)) & 0x7FFFFFFF]


def run_rates(cfg):
    c1 = None if cfg.gaussian_x1 else build_constellation(cfg.m1)
    c2 = build_constellation(cfg.m2) if cfg.m2 is not None else None
    rows = []
    for snr_db in cfg.snr_db_list:
        lc = LinkConfig(p1=1.0, p2=1.0, n0=10.0 ** (-snr_db / 10.0), r0=cfg.r0)
        rng = np.random.default_rng(_rate_seed(cfg.seed, cfg.r0, snr_db))
        if cfg.gaussian_x1:
            est = gaussian_input_rate(lc, relay=cfg.r0 > 0, samples=cfg.realizations,
                                      rng=rng, threads=cfg.threads)
        else:
            est = matched_rate(lc, c1, c2, gaussian_x2=cfg.gaussian_x2,
                               relay=cfg.r0 > 0, samples=cfg.realizations,
                               rng=rng, objective=cfg.objective, threads=cfg.threads)
        rows.append((snr_db, cfg.r0, est.value, est.std_error))
    return ["snr_db", "r0", "rate_bits", "std_err"], rows


def run_gmi(cfg):
    c1 = build_constellation(cfg.m1)
    c2 = build_constellation(cfg.m2) if cfg.m2 is not None else None
    rows = []
    n_real = min(cfg.realizations, 4000)
    per_batch = max(64, cfg.samples // n_real)
    for snr_db in cfg.snr_db_list:
        lc = LinkConfig(p1=1.0, p2=1.0, n0=10.0 ** (-snr_db / 10.0), r0=cfg.r0)
        rng = np.random.default_rng(_rate_seed(cfg.seed, cfg.r0, snr_db))
        est = gmi_rate(lc, c1, c2, gaussian_x2=cfg.gaussian_x2, relay=cfg.r0 > 0,
                       samples=per_batch, realizations=n_real, rng=rng,
                       threads=cfg.threads)
        rows.append((snr_db, cfg.r0, est.value, est.std_error, est.s_star,
                     est.s_star_boundary))
    return ["snr_db", "r0", "rate_bits", "std_err", "s_star", "s_star_boundary"], rows


# ----------------------------------------------------------------------
# optimize-d / asymptotics / table1
# ----------------------------------------------------------------------

def run_optimize_d(cfg):
    if cfg.r0 == 0:
        raise ConfigError("optimize-d needs r0 in {1, 2}")
    snr_db = cfg.snr_db_list[0] if cfg.snr_db_list else 20.0
    lc = LinkConfig(p1=1.0, p2=1.0, n0=10.0 ** (-snr_db / 10.0), r0=cfg.r0)
    c1 = build_constellation(cfg.m1)
    c2 = build_constellation(cfg.m2 if cfg.m2 is not None else cfg.m1)
    partition = build_partition(cfg.r0)
    rows = []
    for i in range(cfg.realizations):
        rng = np.random.default_rng([cfg.seed, i])
        cr = sample_realization(rng)
        rep = optimize_d_report(cr, lc, c1, c2, partition, cfg.objective)
        rows.append((i, cr.g1.real, cr.g1.imag, cr.g2.real, cr.g2.imag,
                     rep.scale.d.real, rep.scale.d.imag, rep.h_cond, rep.h_marg))
    return ["realization_index", "g1_re", "g1_im", "g2_re", "g2_im",
            "d_re", "d_im", "h_cond_bits", "h_marg_bits"], rows


def run_asymptotics(cfg):
    cr = sample_realization(np.random.default_rng([cfg.seed, 0xA5]))
    rows_in = asymptotics_sweep(cfg.alpha, cfg.n0_list, cr,
                                samples=cfg.samples, rng=cfg.seed)
    rows = [(r.n0, r.d, r.h_given_y1, r.se_given_y1,
             r.h_given_x1_y1, r.se_given_x1_y1) for r in rows_in]
    return ["n0", "d", "h_xr_given_y1", "se_y1", "h_xr_given_x1y1", "se_x1y1"], rows


SNR_BRACKET = (-10.0, 60.0)
SNR_RESOLUTION = 0.05


def _min_snr_for_rate(cfg, r0, threshold, c1, c2):
    """Bisection for the smallest SNR whose ensemble matched rate meets
    the threshold; None when unreachable inside the bracket."""

    def rate_at(snr_db):
        lc = LinkConfig(p1=1.0, p2=1.0, n0=10.0 ** (-snr_db / 10.0), r0=r0)
        rng = np.random.default_rng(_rate_seed(cfg.seed, r0, snr_db))
        return matched_rate(lc, c1, c2, relay=r0 > 0, samples=cfg.realizations,
                            rng=rng, objective=cfg.objective, threads=cfg.threads).value

    lo, hi = SNR_BRACKET
    if rate_at(hi) < threshold:
        return None
    if rate_at(lo) >= threshold:
        return lo
    while hi - lo > SNR_RESOLUTION:
        mid = 0.5 * (lo + hi)
        if rate_at(mid) >= threshold:
            hi = mid
        else:
            lo = mid
    return hi


def run_table1(cfg):
    """Minimum-SNR gains of the relay rates relative to r0 = 0."""
    c1 = build_constellation(cfg.m1)
    c2 = build_constellation(cfg.m2 if cfg.m2 is not None else cfg.m1)
    rows = []
    base = None
    for r0 in (0, 1, 2):
        snr = _min_snr_for_rate(cfg, r0, cfg.threshold, c1, c2)
        if r0 == 0:
            base = snr
        if snr is None or base is None:
            rows.append((r0, cfg.threshold, float("nan"), float("nan"), True))
        else:
            rows.append((r0, cfg.threshold, snr, base - snr, False))
    return ["r0", "threshold_bits", "min_snr_db", "gain_db", "unreachable"], rows


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------

def run(cfg):
    if cfg.kind == "ber":
        if cfg.threads > 1:
            with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
                return run_ber_sweep(cfg, pool)
        return run_ber_sweep(cfg)
    if cfg.kind == "rates":
        return run_rates(cfg)
    if cfg.kind == "gmi":
        return run_gmi(cfg)
    if cfg.kind == "optimize-d":
        return run_optimize_d(cfg)
    if cfg.kind == "asymptotics":
        return run_asymptotics(cfg)
    if cfg.kind == "table1":
        return run_table1(cfg)
    raise ConfigError(f"unhandled kind {cfg.kind!r}")


def _run_ber_streaming(cfg, stream):
    """BER sweep with each finished SNR point flushed immediately."""
    meta = {"config": asdict(cfg), "version": __version__}
    stream.write("# " + json.dumps(meta, sort_keys=True) + "\n")
    stream.write("snr_db,frames,bit_errors,ber,fer,mean_iters\n")
    stream.flush()

    def sink(row):
        stream.write(",".join(_fmt(v) for v in row) + "\n")
        stream.flush()

    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            run_ber_sweep(cfg, pool, on_row=sink)
    else:
        run_ber_sweep(cfg, on_row=sink)


def main(argv=None):
    try:
        cfg = parse_config(argv)
        if cfg.kind == "ber":
            if cfg.out:
                with open(cfg.out, "w") as fh:
                    _run_ber_streaming(cfg, fh)
            else:
                _run_ber_streaming(cfg, sys.stdout)
            return 0
        header, rows = run(cfg)
        if cfg.out:
            with open(cfg.out, "w") as fh:
                _write_csv(cfg, header, rows, fh)
        else:
            _write_csv(cfg, header, rows, sys.stdout)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
