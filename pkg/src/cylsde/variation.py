"""Quadratic and cross variation as partition sums, plus the BDG ratio."""
from dataclasses import dataclass

import numpy as np

from .integrate import SQUARE, IntegrabilityError, _ito_from_values, quadratic_rate
from .noise import sample_cylindrical
from .spaces import DimensionError, SpaceScale
from .stats import bootstrap_means, exact_mean, map_paths, require_paths, summarize


@dataclass(frozen=True)
class Partition:
    """Grid-aligned partition ``0 = t_0 < ... < t_m = T`` stored as grid indices."""

    indices: np.ndarray
    dt: float

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size < 2:
            raise ValueError("a partition needs at least two points")
        if idx[0] != 0 or np.any(np.diff(idx) <= 0):
            raise ValueError("partition must start at 0 and increase strictly")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def uniform(cls, grid, stride, t=None):
        """Every ``stride``-th grid point up to time t (default: the horizon)."""
        end = grid.steps if t is None else grid.index_of(t)
        if stride < 1 or end % stride:
            raise ValueError(f"stride {stride} does not divide {end} steps")
        return cls(np.arange(0, end + 1, stride), grid.dt)

    @classmethod
    def from_times(cls, grid, times):
        return cls(np.array([grid.index_of(t) for t in times]), grid.dt)

    @property
    def points(self):
        return self.indices * self.dt

    @property
    def horizon(self):
        return float(self.indices[-1] * self.dt)

    @property
    def mesh(self):
        return float(np.max(np.diff(self.indices)) * self.dt)


def dyadic_ladder(grid, rungs, t=None):
    """Partitions with strides 2^(rungs-1), ..., 2, 1: mesh halves each rung."""
    return [Partition.uniform(grid, 2**r, t) for r in range(rungs - 1, -1, -1)]


def _increments(X, partition, time_axis):
    X = np.asarray(X, dtype=np.float64)
    if partition.indices[-1] >= X.shape[time_axis]:
        raise DimensionError(f"partition reaches index {partition.indices[-1]}, path has {X.shape[time_axis]} points")
    return np.diff(np.take(X, partition.indices, axis=time_axis), axis=time_axis)


def quadratic_variation(X, partition, scale=None):
    """``sum_j |X_{t_{j+1}} - X_{t_j}|^2``.

    Real paths have time on the last axis.  With ``scale`` the path is
    H-valued: time is the second-to-last axis and coordinates the last.
    """
    if scale is None:
        return np.sum(_increments(X, partition, -1) ** 2, axis=-1)
    d = _increments(X, partition, -2)
    if d.shape[-1] != scale.dim:
        raise DimensionError(f"path has {d.shape[-1]} coordinates, scale has {scale.dim}")
    return np.einsum("...jd,...jd,d->...", d, d, scale.weights_H)


def cross_variation(X, y, partition):
    """``sum_j (X_{t_{j+1}} - X_{t_j}) (y_{t_{j+1}} - y_{t_j})``.

    ``y`` is real with time on its last axis.  ``X`` is either real of the
    same shape or H-valued with one extra trailing coordinate axis.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dy = _increments(y, partition, -1)
    if X.ndim == y.ndim:
        if X.shape != y.shape:
            raise DimensionError(f"path shapes {X.shape} and {y.shape} differ")
        return np.sum(_increments(X, partition, -1) * dy, axis=-1)
    if X.ndim == y.ndim + 1 and X.shape[:-1] == y.shape:
        return np.einsum("...jd,...j->...d", _increments(X, partition, -2), dy)
    raise DimensionError(f"path shapes {X.shape} and {y.shape} are not compatible")


@dataclass(frozen=True)
class VariationReport:
    estimate: float
    reference: float
    abs_err: float
    mesh: float
    n_paths: int
    err_summary: object = None

    @property
    def rel_err(self):
        return abs(self.estimate - self.reference) / abs(self.reference) if self.reference else abs(self.estimate)


@dataclass(frozen=True)
class QVIdentityResult:
    """One report per rung, coarse to fine.

    ``decreasing[i]`` says the L1 error at rung i+1 is below rung i beyond
    the bootstrap interval of the paired difference.
    """

    reports: list
    decreasing: list
    tolerance: float

    @property
    def final_ok(self):
        return self.reports[-1].rel_err <= self.tolerance

    @property
    def flagged(self):
        return not all(self.decreasing)

    @property
    def passed(self):
        return self.final_ok and not self.flagged


def qv_samples(sampler, t, strides, n_paths, *, grid, seed, scale=None, component=0, workers=1):
    """Per-path QV estimates for each stride and the per-path reference."""
    scale = scale or SpaceScale.uniform(sampler.dim)
    K = max(sampler.k_required, sampler.columns or 1, component + 1)
    k = grid.index_of(t)
    parts = [Partition.uniform(grid, s, t) for s in strides]

    def chunk(start, count):
        noise = sample_cylindrical(grid, K, seed, count, start)
        if sampler.is_operator and sampler.columns < K:
            noise = noise.truncate(sampler.columns)
        vals = sampler.evaluate(noise, k)
        path = _ito_from_values(sampler, vals, noise, component)
        out = {"ref": quadratic_rate(vals, scale, sampler.is_operator).sum(axis=1) * grid.dt}
        for i, p in enumerate(parts):
            out[f"qv{i}"] = quadratic_variation(path, p, scale)
        return out

    data = map_paths(chunk, n_paths, workers)
    return parts, [data[f"qv{i}"] for i in range(len(parts))], data["ref"]


def qv_identity_check(sampler, t, strides, n_paths, *, grid, seed, scale=None, component=0, workers=1,
                      tolerance=0.05, n_boot=1000):
    """QV of the integral against ``int |Psi|^2 ds`` along a mesh ladder (coarse to fine)."""
    require_paths(n_paths)
    if sampler.integrability != SQUARE:
        raise IntegrabilityError("QV identity is checked for square-integrable integrands")
    strides = list(strides)
    if any(a <= b for a, b in zip(strides, strides[1:])):
        raise ValueError("strides must be strictly decreasing (mesh refines)")
    parts, qvs, ref = qv_samples(sampler, t, strides, n_paths, grid=grid, seed=seed, scale=scale,
                                 component=component, workers=workers)
    ref_mean = exact_mean(ref)
    errs = [np.abs(q - ref) for q in qvs]
    reports = [
        VariationReport(exact_mean(q), ref_mean, exact_mean(e), p.mesh, int(n_paths), summarize(e, n_boot, seed + i))
        for i, (p, q, e) in enumerate(zip(parts, qvs, errs))
    ]
    decreasing = []
    for i in range(len(errs) - 1):
        boots = bootstrap_means(errs[i] - errs[i + 1], n_boot, seed + 100 + i)
        decreasing.append(bool(np.quantile(boots, 0.025) > 0))
    return QVIdentityResult(reports, decreasing, tolerance)


@dataclass(frozen=True)
class BDGRecord:
    ratio: float
    numerator: object
    denominator: object


def bdg_samples(B, t, n_paths, *, grid, seed, scale=None, workers=1):
    scale = scale or SpaceScale.uniform(B.dim)
    K = max(B.k_required, B.columns or 1)
    k = grid.index_of(t)

    def chunk(start, count):
        noise = sample_cylindrical(grid, K, seed, count, start)
        vals = B.evaluate(noise, k)
        path = _ito_from_values(B, vals, noise)
        running = np.sqrt(np.einsum("nsd,nsd,d->ns", path, path, scale.weights_H))
        hs = quadratic_rate(vals, scale, B.is_operator).sum(axis=1) * grid.dt
        return {"sup": running.max(axis=1), "root": np.sqrt(hs)}

    return map_paths(chunk, n_paths, workers)


def bdg_ratio(B, t, n_paths, *, grid, seed, scale=None, workers=1, n_boot=1000):
    """``E sup_r |int_0^r B dW|_H / E (int_0^t |B|_HS^2 ds)^(1/2)``; 0 when B vanishes."""
    require_paths(n_paths)
    if B.integrability != SQUARE:
        raise IntegrabilityError("BDG ratio needs a square-integrable integrand")
    s = bdg_samples(B, t, n_paths, grid=grid, seed=seed, scale=scale, workers=workers)
    num = summarize(s["sup"], n_boot, seed)
    den = summarize(s["root"], n_boot, seed + 1)
    ratio = num.mean / den.mean if den.mean > 0 else 0.0
    return BDGRecord(ratio, num, den)


def random_constant_operators(n_cases, seed, max_dim=3, max_k=3):
    """Deterministic suite of random constant operators as (dim, K) column arrays."""
    rng = np.random.Generator(np.random.PCG64(seed))
    cases = []
    for _ in range(n_cases):
        d = int(rng.integers(1, max_dim + 1))
        K = int(rng.integers(1, max_k + 1))
        cases.append(rng.normal(size=(d, K)))
    return cases
