"""Ito integrals against Brownian and truncated cylindrical Brownian noise.

Integrands are :class:`ProcessSampler` objects evaluated on the grid of a
:class:`~cylsde.noise.CylindricalNoise`.  The Ito integral is the left-point
sum ``sum_k Psi(t_k) dW_k``, which is exactly the integral of the simple
process that freezes ``Psi`` on each grid cell.
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import kernels
from .noise import sample_cylindrical
from .spaces import DimensionError, SpaceScale, LinearOp
from .stats import map_paths, require_paths, summarize

SQUARE = "square"
LOCAL = "local"


class NonAdaptedError(ValueError):
    pass


class IntegrabilityError(ValueError):
    pass


# ------------------------------------------------------------------ samplers


class ProcessSampler:
    """An adapted process that can be evaluated on a noise grid.

    ``columns`` is None for an H-valued process and K for an operator-valued
    one (values carry a trailing axis of K columns ``B(e_i)``).
    """

    def __init__(self, dim, columns=None, integrability=SQUARE, adapted=True, k_required=1, name=None):
        if integrability not in (SQUARE, LOCAL):
            raise ValueError(f"integrability must be {SQUARE!r} or {LOCAL!r}")
        self.dim = int(dim)
        self.columns = None if columns is None else int(columns)
        self.integrability = integrability
        self.adapted = bool(adapted)
        self.k_required = max(int(k_required), self.columns or 1)
        self.name = name or type(self).__name__

    @property
    def is_operator(self):
        return self.columns is not None

    def _eval(self, noise, stop, include_end):
        raise NotImplementedError

    def evaluate(self, noise, stop=None, include_end=False):
        """Values at grid indices ``0..stop-1`` (or ``0..stop`` with ``include_end``).

        Shape is (n_paths, points, dim) or (n_paths, points, dim, columns).
        """
        if not self.adapted:
            raise NonAdaptedError(f"sampler {self.name!r} is not adapted and cannot be integrated")
        if noise.K < self.k_required:
            raise DimensionError(f"sampler {self.name!r} needs {self.k_required} noise components, noise has {noise.K}")
        stop = noise.grid.steps if stop is None else int(stop)
        vals = np.asarray(self._eval(noise, stop, include_end), dtype=np.float64)
        expected = (noise.n_paths, stop + int(include_end), self.dim)
        if self.is_operator:
            expected += (self.columns,)
        if vals.shape != expected:
            raise DimensionError(f"sampler {self.name!r} produced shape {vals.shape}, expected {expected}")
        return vals

    # convenience constructors -------------------------------------------------

    @staticmethod
    def markov(fn, dim, columns=None, **kw):
        return MarkovSampler(fn, dim, columns, **kw)

    @staticmethod
    def history(fn, dim, columns=None, **kw):
        return HistorySampler(fn, dim, columns, **kw)

    @staticmethod
    def constant(a):
        return ConstantSampler(a)

    @staticmethod
    def brownian(coeffs=(1.0,), component=0):
        """``Psi_s = coeffs * W^component_s``."""
        c = np.atleast_1d(np.asarray(coeffs, dtype=np.float64))
        return MarkovSampler(
            lambda t, w: w[:, component, None] * c, c.shape[0], k_required=component + 1, name="brownian"
        )


class MarkovSampler(ProcessSampler):
    """``Psi(t_k) = fn(t_k, W_{t_k})`` evaluated pointwise.

    ``fn`` receives flat arrays ``t`` of shape (m,) and ``w`` of shape (m, K)
    with rows in no particular time order, so it cannot look ahead: it is
    adapted by construction.
    """

    def __init__(self, fn, dim, columns=None, **kw):
        super().__init__(dim, columns, **kw)
        self.fn = fn

    def _eval(self, noise, stop, include_end):
        npts = stop + int(include_end)
        W = noise.W()[:, :, :npts]
        n, K, _ = W.shape
        t = np.tile(noise.grid.times()[:npts], n)
        w = W.transpose(0, 2, 1).reshape(n * npts, K)
        out = np.asarray(self.fn(t, w), dtype=np.float64)
        return out.reshape((n, npts) + out.shape[1:])


class ConstantSampler(ProcessSampler):
    """A deterministic constant vector, or operator given by its columns."""

    def __init__(self, a):
        a = np.atleast_1d(np.asarray(a, dtype=np.float64))
        if a.ndim > 2:
            raise DimensionError("constant integrand must be a vector or a (dim, K) column array")
        super().__init__(a.shape[0], a.shape[1] if a.ndim == 2 else None, name="constant")
        self.value = a

    def _eval(self, noise, stop, include_end):
        return np.broadcast_to(self.value, (noise.n_paths, stop + int(include_end)) + self.value.shape)


class HistorySampler(ProcessSampler):
    """``Psi(t_k) = fn(k, t_k, W[..., :k+1])`` evaluated one index at a time."""

    def __init__(self, fn, dim, columns=None, **kw):
        super().__init__(dim, columns, **kw)
        self.fn = fn

    def _eval(self, noise, stop, include_end):
        W = noise.W()
        times = noise.grid.times()
        rows = [np.asarray(self.fn(k, times[k], W[:, :, : k + 1]), dtype=np.float64) for k in range(stop + int(include_end))]
        return np.stack(rows, axis=1)


class PathSampler(ProcessSampler):
    """Values supplied on the full grid, e.g. a solver's state path.

    The caller vouches for adaptedness through ``adapted``; solver output is
    adapted because each state only uses earlier increments.
    """

    def __init__(self, values, columns=None, adapted=True, **kw):
        values = np.asarray(values, dtype=np.float64)
        dim = values.shape[2]
        super().__init__(dim, columns, adapted=adapted, **kw)
        self.values = values

    def _eval(self, noise, stop, include_end):
        if self.values.shape[0] != noise.n_paths or self.values.shape[1] != noise.grid.steps + 1:
            raise DimensionError(
                f"path values {self.values.shape[:2]} do not match noise ({noise.n_paths}, {noise.grid.steps + 1})"
            )
        return self.values[:, : stop + int(include_end)]


class DerivedSampler(ProcessSampler):
    """Pointwise function of other samplers' values."""

    def __init__(self, parents, combine, dim, columns=None, **kw):
        kw.setdefault("integrability", LOCAL if any(p.integrability == LOCAL for p in parents) else SQUARE)
        kw.setdefault("adapted", all(p.adapted for p in parents))
        kw.setdefault("k_required", max(p.k_required for p in parents))
        super().__init__(dim, columns, **kw)
        self.parents = list(parents)
        self.combine = combine

    def _eval(self, noise, stop, include_end):
        vals = [p.evaluate(noise, stop, include_end) for p in self.parents]
        return self.combine(*vals)


def combine(alpha, psi, beta, phi):
    """The sampler ``alpha * psi + beta * phi``."""
    if psi.dim != phi.dim or psi.columns != phi.columns:
        raise DimensionError("cannot combine samplers of different shapes")
    return DerivedSampler([psi, phi], lambda a, b: alpha * a + beta * b, psi.dim, psi.columns, name="combination")


def map_operator(T, sampler):
    """``T Psi`` (or ``T B`` column by column) for a linear operator T."""
    m = T.matrix if isinstance(T, LinearOp) else np.asarray(T, dtype=np.float64)
    if m.shape[1] != sampler.dim:
        raise DimensionError(f"operator of shape {m.shape} cannot act on dimension {sampler.dim}")
    if sampler.is_operator:
        fn = lambda v: np.einsum("ij,nsjk->nsik", m, v)
    else:
        fn = lambda v: v @ m.T
    return DerivedSampler([sampler], fn, m.shape[0], sampler.columns, name="mapped")


def pair_with(sampler, phi, scale):
    """The real-valued process ``<Psi, phi>_H`` as a 1-dimensional sampler."""
    w = scale.weights_H * np.asarray(phi, dtype=np.float64)
    if sampler.is_operator:
        fn = lambda v: np.einsum("nsdk,d->nsk", v, w)[:, :, None, :]
    else:
        fn = lambda v: (v @ w)[:, :, None]
    return DerivedSampler([sampler], fn, 1, sampler.columns, name="paired")


def clamp_norm(sampler, level, scale=None):
    """``Psi * min(1, level / |Psi|_H)``; dominated by ``Psi`` for any level."""
    scale = scale or SpaceScale.uniform(sampler.dim)
    w = scale.weights_H

    def fn(v):
        if sampler.is_operator:
            nrm = np.sqrt(np.einsum("d,nsdk->ns", w, v * v))[:, :, None, None]
        else:
            nrm = np.sqrt(np.einsum("d,nsd->ns", w, v * v))[:, :, None]
        factor = np.minimum(1.0, level / np.maximum(nrm, 1e-300))
        return v * factor

    return DerivedSampler([sampler], fn, sampler.dim, sampler.columns, name=f"clamp({level})")


# -------------------------------------------------------------- localization


@dataclass(frozen=True)
class StoppingRule:
    """First passage of a running functional above ``level``, capped at time ``level``.

    With ``functional=None`` the running functional is ``int_0^t |Psi_s|^2 ds``
    (Hilbert-Schmidt norm for operator samplers) in the H weights of
    ``scale``.  A callable receives the left-point values and returns the
    nonnegative per-step rate of shape (n_paths, steps).
    """

    level: float
    functional: Optional[Callable] = None
    scale: Optional[SpaceScale] = None

    def rates(self, values, is_operator):
        if self.functional is not None:
            return np.asarray(self.functional(values), dtype=np.float64)
        w = (self.scale or SpaceScale.uniform(values.shape[2])).weights_H
        sq = values * values
        if is_operator:
            sq = sq.sum(axis=3)
        return sq @ w

    def stop_index(self, values, is_operator, dt):
        """Grid index of tau for each path (values given at left points)."""
        n, s = values.shape[:2]
        if np.isinf(self.level):
            return np.full(n, s + 1)
        running = np.zeros((n, s + 1))
        np.cumsum(self.rates(values, is_operator) * dt, axis=1, out=running[:, 1:])
        slack = self.level * (1 - 1e-12)
        hit = running >= slack
        first = np.where(hit.any(axis=1), hit.argmax(axis=1), s + 1)
        cap = int(np.ceil(self.level / dt - 1e-9))
        return np.minimum(first, cap)


class LocalizedSampler(ProcessSampler):
    """``Psi_t 1_{t <= tau_n}`` on a grid.

    Left-point values vanish from the step starting at tau on, so the running
    functional overshoots the level by at most one step.  Evaluation at all
    grid points returns the stopped process ``Psi_{t ^ tau}``, which is what
    the cross-variation in the Stratonovich correction uses.
    """

    def __init__(self, inner, rule):
        super().__init__(
            inner.dim, inner.columns, integrability=SQUARE, adapted=inner.adapted, k_required=inner.k_required,
            name=f"localized({inner.name}, {rule.level})",
        )
        self.inner = inner
        self.rule = rule

    def tau_index(self, noise, stop=None):
        stop = noise.grid.steps if stop is None else stop
        left = self.inner.evaluate(noise, stop)
        return self.rule.stop_index(left, self.inner.is_operator, noise.grid.dt)

    def _eval(self, noise, stop, include_end):
        vals = self.inner.evaluate(noise, stop, include_end)
        left = vals[:, :stop]
        k_tau = self.rule.stop_index(left, self.inner.is_operator, noise.grid.dt)
        idx = np.arange(vals.shape[1])
        extra = (None,) * (vals.ndim - 2)
        if not include_end:
            mask = (idx[None, :] < k_tau[:, None])[(...,) + extra]
            return vals * mask
        held = np.minimum(idx[None, :], k_tau[:, None])
        take = held[(...,) + extra]
        return np.take_along_axis(vals, np.broadcast_to(take, vals.shape), axis=1)


class StoppedSampler(ProcessSampler):
    """Left-point values of ``inner`` cut off at the stopping time of ``localized``."""

    def __init__(self, inner, localized):
        super().__init__(inner.dim, inner.columns, adapted=inner.adapted,
                         k_required=max(inner.k_required, localized.k_required), name=f"stopped({inner.name})")
        self.inner = inner
        self.localized = localized

    def _eval(self, noise, stop, include_end):
        if include_end:
            raise ValueError("stopped witness parts are only evaluated at left points")
        vals = self.inner.evaluate(noise, stop)
        k_tau = self.localized.tau_index(noise, stop)
        mask = np.arange(stop)[None, :] < k_tau[:, None]
        return vals * mask[(...,) + (None,) * (vals.ndim - 2)]


def localize(sampler, rule):
    """Truncate ``sampler`` at the stopping time defined by ``rule``."""
    if np.isinf(rule.level):
        return sampler
    if rule.level <= 0:
        raise ValueError("stopping level must be positive")
    return LocalizedSampler(sampler, rule)


# --------------------------------------------------------------- simple case


@dataclass(frozen=True)
class SimpleProcess:
    """``a_0 1_{(t_0,t_1]} + a_1 1_{(t_1,t_2]} + ...`` with grid breakpoints.

    ``values`` has shape (m, d) for deterministic coefficients or
    (n_paths, m, d).  With ``m == len(breakpoints)`` the last block is
    open ended; with ``m == len(breakpoints) - 1`` it stops at the last
    breakpoint.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=np.float64)
        vals = np.asarray(self.values, dtype=np.float64)
        if bp.ndim != 1 or bp.size < 1 or np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if vals.ndim == 1:
            vals = vals[:, None]
        m = vals.shape[-2]
        if m not in (bp.size, bp.size - 1) or m < 1:
            raise ValueError(f"{m} coefficient blocks do not fit {bp.size} breakpoints")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def adapted(cls, grid, breakpoints, rule, W, open_ended=False):
        """Coefficients ``a_i = rule(i, W[..., :k_i + 1])`` from the path prefix up to ``t_i``."""
        bp = np.asarray(breakpoints, dtype=np.float64)
        W = np.asarray(W, dtype=np.float64)
        m = bp.size if open_ended else bp.size - 1
        vals = [np.atleast_1d(np.asarray(rule(i, W[..., : grid.index_of(bp[i]) + 1]))) for i in range(m)]
        return cls(bp, np.stack(vals, axis=-2))


def integrate_simple(proc, W, t, grid):
    """``sum_i a_i (W_{t_{i+1} ^ t} - W_{t_i ^ t})`` for one or many paths W.

    ``W`` holds path values on ``grid``: shape (steps + 1,) or (n, steps + 1).
    """
    W = np.asarray(W, dtype=np.float64)
    idx = [grid.index_of(b) for b in proc.breakpoints]
    k_t = grid.index_of(t)
    m = proc.values.shape[-2]
    ends = idx[1:] + ([grid.steps] if m == len(idx) else [])
    total = 0.0
    for i in range(m):
        lo, hi = min(idx[i], k_t), min(ends[i], k_t)
        dW = W[..., hi] - W[..., lo]
        a = proc.values[..., i, :]
        total = total + a * np.asarray(dW)[..., None]
    return np.broadcast_to(total, np.broadcast_shapes(np.shape(total), (proc.values.shape[-1],))).copy()


# ------------------------------------------------------------------ integrals


def integral_path(sampler, noise, t, component=0):
    """Running integral at grid points ``0..index(t)``: shape (n, k + 1, dim).

    Operator-valued samplers integrate against all noise components; vector
    samplers against ``component``.
    """
    k = noise.grid.index_of(t)
    return _ito_from_values(sampler, sampler.evaluate(noise, k), noise, component)


def _ito_from_values(sampler, vals, noise, component=0):
    k = vals.shape[1]
    if sampler.is_operator:
        if sampler.columns != noise.K:
            raise DimensionError(f"operator has {sampler.columns} columns, noise has K={noise.K}")
        dW = noise.increments[:, :, :k]
    else:
        vals = vals[..., None]
        dW = noise.increments[:, component : component + 1, :k]
    return kernels.ito_path(vals, dW)


def integrate_ito(sampler, noise, t, component=0):
    """Left-point Ito integral of an H-valued sampler against ``W^component``."""
    if sampler.is_operator:
        raise DimensionError("operator-valued integrands go through integrate_cylindrical")
    return integral_path(sampler, noise, t, component)[:, -1]


def integrate_cylindrical(B, noise, t):
    """``sum_i int B(e_i) dW^i`` over the K components of ``noise``."""
    if not B.is_operator:
        raise DimensionError("integrate_cylindrical needs an operator-valued sampler")
    return integral_path(B, noise, t)[:, -1]


def quadratic_rate(values, scale, is_operator):
    """``|Psi_k|_H^2`` (or Hilbert-Schmidt squared) per path and grid point."""
    if is_operator:
        return np.einsum("nsdk,nsdk,d->ns", values, values, scale.weights_H)
    return np.einsum("nsd,nsd,d->ns", values, values, scale.weights_H)


# ------------------------------------------------------------------- checks


@dataclass(frozen=True)
class IsometryRecord:
    lhs: float
    rhs: float
    rel_err: float
    ci: tuple
    lhs_summary: object
    rhs_summary: object
    diff_summary: object


def _noise_k(sampler, k_modes):
    return max(sampler.k_required, sampler.columns or 1, k_modes or 1)


def isometry_samples(sampler, t, n_paths, *, grid, seed, scale=None, component=0, workers=1):
    scale = scale or SpaceScale.uniform(sampler.dim)
    K = _noise_k(sampler, component + 1)
    k = grid.index_of(t)

    def chunk(start, count):
        noise = sample_cylindrical(grid, K, seed, count, start)
        if sampler.is_operator:
            noise = noise.truncate(sampler.columns) if sampler.columns < K else noise
        vals = sampler.evaluate(noise, k)
        end = _ito_from_values(sampler, vals, noise, component)[:, -1]
        lhs = end**2 @ scale.weights_H
        rhs = quadratic_rate(vals, scale, sampler.is_operator).sum(axis=1) * grid.dt
        return {"lhs": lhs, "rhs": rhs}

    return map_paths(chunk, n_paths, workers)


def isometry_check(sampler, t, n_paths, *, grid, seed, scale=None, component=0, workers=1, n_boot=1000):
    """Compare E|int Psi dW|^2 with E int |Psi|^2 ds on shared noise."""
    require_paths(n_paths)
    if sampler.integrability != SQUARE:
        raise IntegrabilityError("isometry holds for square-integrable integrands; localize first")
    s = isometry_samples(sampler, t, n_paths, grid=grid, seed=seed, scale=scale, component=component, workers=workers)
    lhs = summarize(s["lhs"], n_boot, seed)
    rhs = summarize(s["rhs"], n_boot, seed + 1)
    diff = summarize(s["lhs"] - s["rhs"], n_boot, seed + 2)
    rel = abs(lhs.mean - rhs.mean) / rhs.mean if rhs.mean > 0 else abs(lhs.mean - rhs.mean)
    return IsometryRecord(lhs.mean, rhs.mean, rel, diff.ci95, lhs, rhs, diff)


@dataclass(frozen=True)
class IdentityRecord:
    """Pathwise comparison of two computations of the same quantity."""

    lhs: np.ndarray
    rhs: np.ndarray
    max_abs_diff: float
    term_scale: float

    @property
    def relative(self):
        return self.max_abs_diff / self.term_scale if self.term_scale > 0 else self.max_abs_diff


def _noise_for(sampler, grid, seed, n_paths):
    return sample_cylindrical(grid, _noise_k(sampler, None), seed, n_paths)


def _integrate_any(sampler, noise, t, component=0):
    return integral_path(sampler, noise, t, component)[:, -1]


def _term_scale(sampler, noise, t, component=0):
    k = noise.grid.index_of(t)
    vals = np.abs(sampler.evaluate(noise, k))
    if sampler.is_operator:
        dW = np.abs(noise.increments[:, : sampler.columns, :k])
        return float(np.einsum("nsdk,nks->nd", vals, dW).max(initial=0.0))
    dW = np.abs(noise.increments[:, component, :k])
    return float(np.einsum("nsd,ns->nd", vals, dW).max(initial=0.0))


def duality_check(sampler, phi, t, n_paths, *, grid, seed, scale=None, component=0):
    """``<int Psi dW, phi>_H`` against ``int <Psi, phi>_H dW`` on identical noise."""
    scale = scale or SpaceScale.uniform(sampler.dim)
    phi = np.asarray(phi, dtype=np.float64)
    noise = _noise_for(sampler, grid, seed, n_paths)
    full = _integrate_any(sampler, noise, t, component)
    lhs = full @ (scale.weights_H * phi)
    rhs = _integrate_any(pair_with(sampler, phi, scale), noise, t, component)[:, 0]
    norm_phi = np.sqrt(np.sum(scale.weights_H * phi * phi))
    term = _term_scale(sampler, noise, t, component) * norm_phi * np.sqrt(scale.weights_H.max())
    return IdentityRecord(lhs, rhs, float(np.max(np.abs(lhs - rhs))), term)


def operator_pushthrough_check(T, sampler, t, n_paths, *, grid, seed, component=0):
    """``T(int Psi dW)`` against ``int T Psi dW`` on identical noise."""
    m = T.matrix if isinstance(T, LinearOp) else np.asarray(T, dtype=np.float64)
    noise = _noise_for(sampler, grid, seed, n_paths)
    lhs = _integrate_any(sampler, noise, t, component) @ m.T
    rhs = _integrate_any(map_operator(m, sampler), noise, t, component)
    term = _term_scale(sampler, noise, t, component) * max(float(np.abs(m).sum(axis=1).max()), 1e-300)
    return IdentityRecord(lhs, rhs, float(np.max(np.abs(lhs - rhs))), term)
