"""Path fan-out and summary statistics shared by every Monte Carlo routine.

Paths are processed in fixed-size chunks whose boundaries do not depend on the
worker count, and per-path results are reassembled in path order before any
reduction.  Reductions use exactly rounded summation, so statistics are
bit-stable across worker counts and schedules.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

CHUNK = 4096
MIN_STAT_PATHS = 100


class TooFewPathsError(ValueError):
    pass


def require_paths(n_paths, minimum=MIN_STAT_PATHS):
    if int(n_paths) < minimum:
        raise TooFewPathsError(f"need at least {minimum} paths for a statistical estimate, got {n_paths}")
    return int(n_paths)


def path_chunks(n_paths, chunk=CHUNK):
    return [(start, min(chunk, n_paths - start)) for start in range(0, n_paths, chunk)]


def map_paths(fn, n_paths, workers=1, chunk=CHUNK):
    """Call ``fn(first_path, count)`` over fixed chunks and stack the results.

    ``fn`` returns a dict of arrays whose leading axis has length ``count``.
    The output dict holds the concatenation in path order.
    """
    if n_paths <= 0:
        raise ValueError("n_paths must be positive")
    chunks = path_chunks(int(n_paths), chunk)
    if workers <= 1 or len(chunks) == 1:
        parts = [fn(start, count) for start, count in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: fn(*c), chunks))
    return {key: np.concatenate([p[key] for p in parts], axis=0) for key in parts[0]}


def exact_mean(x):
    """Mean with exactly rounded summation (order independent)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("mean of an empty sample")
    return math.fsum(x.tolist()) / x.size


@dataclass(frozen=True)
class StatSummary:
    mean: float
    std_err: float
    ci95: tuple
    n: int

    def contains(self, value, widen=1.0):
        half_lo = (self.mean - self.ci95[0]) * widen
        half_hi = (self.ci95[1] - self.mean) * widen
        return self.mean - half_lo <= value <= self.mean + half_hi


def bootstrap_means(x, n_boot=1000, seed=0, batch=25):
    x = np.asarray(x, dtype=np.float64).ravel()
    rng = np.random.Generator(np.random.PCG64(seed))
    out = np.empty(n_boot)
    n = x.size
    for lo in range(0, n_boot, batch):
        m = min(batch, n_boot - lo)
        idx = rng.integers(0, n, size=(m, n))
        out[lo:lo + m] = x[idx].mean(axis=1)
    return out


def summarize(samples, n_boot=1000, seed=0):
    """Mean, standard error and a percentile-bootstrap 95% interval."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    n = x.size
    mean = exact_mean(x)
    if n < 2:
        return StatSummary(mean, 0.0, (mean, mean), n)
    std_err = float(np.std(x, ddof=1) / math.sqrt(n))
    if n_boot:
        boots = bootstrap_means(x, n_boot, seed)
        lo, hi = np.quantile(boots, [0.025, 0.975])
    else:
        lo, hi = mean - 1.96 * std_err, mean + 1.96 * std_err
    return StatSummary(mean, std_err, (float(min(lo, mean)), float(max(hi, mean))), n)


def loglog_slope(params, errors):
    """Least-squares slope of log(error) against log(param)."""
    p = np.log(np.asarray(params, dtype=np.float64))
    e = np.log(np.asarray(errors, dtype=np.float64))
    slope, _ = np.polyfit(p, e, 1)
    return float(slope)
