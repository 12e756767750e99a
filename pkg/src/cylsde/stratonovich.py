"""Stratonovich integrals, the Ito correction drift and constant-noise collapse.

A Stratonovich integral is the Ito integral plus half the cross-variation of
integrand and driver.  Forming that cross-variation needs the integrand to be
a semimartingale, so integrands carry a :class:`SemimartingaleWitness`
``Psi_t = Psi_0 + int a ds + sum_j int b_j dW^j`` which is checked against
the sampler path before use.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .integrate import ConstantSampler, LocalizedSampler, ProcessSampler, StoppedSampler, _ito_from_values, localize
from .noise import sample_cylindrical
from .spaces import DimensionError
from .stats import map_paths, require_paths, summarize
from .variation import Partition, quadratic_variation


class MissingWitnessError(ValueError):
    pass


class WitnessMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class SemimartingaleWitness:
    """Decomposition ``Psi_t = initial + int drift ds + sum_j int diffusion[:, j] dW^j``.

    For an operator-valued integrand with values (dim, C) the witness works
    on the flattened (dim * C,) vector, row-major.
    """

    drift: ProcessSampler
    diffusion: ProcessSampler
    initial: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "initial", np.atleast_1d(np.asarray(self.initial, dtype=np.float64)))
        if self.drift.is_operator or not self.diffusion.is_operator:
            raise DimensionError("witness drift must be vector valued and diffusion operator valued")
        if not self.drift.dim == self.diffusion.dim == self.initial.size:
            raise DimensionError("witness parts have inconsistent dimensions")

    def reconstruct(self, noise, stop):
        """The witnessed path on grid indices 0..stop, shape (n, stop + 1, flat_dim)."""
        a = self.drift.evaluate(noise, stop)
        b = self.diffusion.evaluate(noise, stop)
        n = noise.n_paths
        path = np.empty((n, stop + 1, self.initial.size))
        path[:, 0] = self.initial
        np.cumsum(a * noise.grid.dt, axis=1, out=path[:, 1:])
        path[:, 1:] += self.initial
        K = b.shape[3]
        path += kernels.ito_path(b, noise.increments[:, :K, :stop])
        return path


@dataclass(frozen=True)
class StratIntegrand:
    """A sampler paired with its semimartingale witness.

    ``tolerance`` bounds the witness check: the RMS gap between sampler and
    reconstructed path must stay below ``tolerance * sqrt(dt) * max(1, rms)``.
    """

    sampler: ProcessSampler
    witness: Optional[SemimartingaleWitness] = None
    tolerance: float = 5.0

    def __post_init__(self):
        if self.witness is None:
            raise MissingWitnessError(
                "Stratonovich integrands need a semimartingale witness (drift, diffusion, initial)"
            )
        flat = self.sampler.dim * (self.sampler.columns or 1)
        if self.witness.initial.size != flat:
            raise DimensionError(f"witness has dimension {self.witness.initial.size}, integrand flattens to {flat}")

    @classmethod
    def constant(cls, a):
        s = ConstantSampler(a)
        flat = s.value.ravel()
        zero = np.zeros(flat.size)
        return cls(s, SemimartingaleWitness(ConstantSampler(zero), ConstantSampler(zero[:, None]), flat))

    @classmethod
    def brownian(cls, coeffs=(1.0,), component=0):
        """``Psi = coeffs * W^component`` with witness diffusion ``coeffs`` in column ``component``."""
        c = np.atleast_1d(np.asarray(coeffs, dtype=np.float64))
        cols = np.zeros((c.size, component + 1))
        cols[:, component] = c
        return cls(
            ProcessSampler.brownian(c, component),
            SemimartingaleWitness(ConstantSampler(np.zeros(c.size)), ConstantSampler(cols), np.zeros(c.size)),
        )

    def localize(self, rule):
        """Stop the integrand and both witness parts at the same stopping time."""
        loc = localize(self.sampler, rule)
        if loc is self.sampler:
            return self
        w = self.witness
        stopped = SemimartingaleWitness(StoppedSampler(w.drift, loc), StoppedSampler(w.diffusion, loc), w.initial)
        return StratIntegrand(loc, stopped, self.tolerance)

    def flat_values(self, noise, stop):
        v = self.sampler.evaluate(noise, stop, include_end=True)
        return v.reshape(v.shape[0], v.shape[1], -1)

    def check(self, noise, stop):
        """Raise :class:`WitnessMismatchError` if the witness does not reproduce the path."""
        if self.witness.diffusion.columns > noise.K:
            raise DimensionError("witness uses more noise components than supplied")
        path = self.flat_values(noise, stop)
        rebuilt = self.witness.reconstruct(noise, stop)
        gap = math.sqrt(float(np.mean((path - rebuilt) ** 2)))
        size = math.sqrt(float(np.mean(path**2)))
        bound = self.tolerance * math.sqrt(noise.grid.dt) * max(1.0, size)
        if not gap <= bound:
            raise WitnessMismatchError(f"witness reconstruction gap {gap:.3g} exceeds {bound:.3g}")
        return gap


def _left_values(s, vals, noise, k):
    # localized samplers hold the stopped value at the end points but vanish at left points after tau
    return s.evaluate(noise, k) if isinstance(s, LocalizedSampler) else vals[:, :k]


def _as_integrand(x):
    if isinstance(x, StratIntegrand):
        return x
    raise MissingWitnessError("pass a StratIntegrand carrying a semimartingale witness")


def integrate_stratonovich_1d(integrand, noise, t, component=0, mode="partition", check=True):
    """``int Psi o dW^component`` as Ito integral plus half the cross-variation.

    ``mode="partition"`` uses the grid partition sum of the cross-variation;
    ``mode="witness"`` integrates the witness diffusion column instead.
    """
    integrand = _as_integrand(integrand)
    s = integrand.sampler
    if s.is_operator:
        raise DimensionError("operator-valued integrands go through strat_cylindrical")
    k = noise.grid.index_of(t)
    if check:
        integrand.check(noise, k)
    vals = s.evaluate(noise, k, include_end=True)
    ito = _ito_from_values(s, _left_values(s, vals, noise, k), noise, component)[:, -1]
    if mode == "partition":
        dv = np.diff(vals, axis=1)
        corr = np.einsum("nsd,ns->nd", dv, noise.increments[:, component, :k])
    elif mode == "witness":
        b = integrand.witness.diffusion.evaluate(noise, k)
        if component >= b.shape[3]:
            return ito
        corr = b[:, :, :, component].sum(axis=1) * noise.grid.dt
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return ito + 0.5 * corr


def midpoint_sum(integrand, noise, t, component=0):
    """``sum_k (Psi_k + Psi_{k+1}) / 2 * dW_k``: the Stratonovich midpoint rule."""
    s = integrand.sampler if isinstance(integrand, StratIntegrand) else integrand
    k = noise.grid.index_of(t)
    vals = s.evaluate(noise, k, include_end=True)
    mid = 0.5 * (vals[:, :-1] + vals[:, 1:])
    if s.is_operator:
        return np.einsum("nsdk,nks->nd", mid, noise.increments[:, : s.columns, :k])
    return np.einsum("nsd,ns->nd", mid, noise.increments[:, component, :k])


def strat_cylindrical(B, noise, t, mode="partition", check=True):
    """``sum_i (int B e_i dW^i + 1/2 [B e_i, W^i]_t)`` over the K columns of B."""
    B = _as_integrand(B)
    s = B.sampler
    if not s.is_operator:
        raise DimensionError("strat_cylindrical needs an operator-valued integrand")
    if s.columns != noise.K:
        raise DimensionError(f"integrand has {s.columns} columns, noise has K={noise.K}")
    k = noise.grid.index_of(t)
    if check:
        B.check(noise, k)
    vals = s.evaluate(noise, k, include_end=True)
    ito = _ito_from_values(s, _left_values(s, vals, noise, k), noise)[:, -1]
    if mode == "partition":
        corr = np.einsum("nsdk,nks->nd", np.diff(vals, axis=1), noise.increments[:, :, :k])
    elif mode == "witness":
        b = B.witness.diffusion.evaluate(noise, k)
        n, _, flat, J = b.shape
        b = b.reshape(n, k, s.dim, s.columns, J)
        m = min(s.columns, J)
        corr = np.einsum("nsdii->nd", b[:, :, :, :m, :m]) * noise.grid.dt
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return ito + 0.5 * corr


def ito_correction(G, phi):
    """``1/2 sum_i DG_i . G_i(phi)``; equals ``1/2 sum_i G_i(G_i phi)`` for linear G_i.

    For affine ``G_i(phi) = M_i phi + b_i`` the derivative is ``M_i``.
    Broadcasts over leading axes of ``phi``.
    """
    phi = np.asarray(phi, dtype=np.float64)
    out = np.zeros_like(phi)
    for i in range(G.K):
        out += G.apply(i, phi) @ G.matrices[i].T
    return 0.5 * out


def collapse_constant_noise(lambdas):
    """``sigma = (sum lambda_i^2)^(1/2)``: the single Brownian scale of ``sum lambda_i W^i``."""
    lam = np.asarray(lambdas, dtype=np.float64).ravel()
    if not np.all(np.isfinite(lam)):
        raise ValueError("lambdas must be finite")
    return math.sqrt(math.fsum((lam * lam).tolist()))


def combined_path(lambdas, noise):
    """``sum_i lambda_i W^i_t`` on the grid, shape (n, steps + 1)."""
    lam = np.asarray(lambdas, dtype=np.float64)
    if lam.size != noise.K:
        raise DimensionError(f"{lam.size} lambdas for K={noise.K} noise components")
    return np.einsum("i,nis->ns", lam, noise.W())


def collapsed_driver(lambdas, noise):
    """The standard Brownian motion ``sum_i lambda_i W^i / sigma``."""
    sigma = collapse_constant_noise(lambdas)
    if sigma == 0:
        raise ValueError("all lambdas vanish; there is no collapsed driver")
    return combined_path(lambdas, noise) / sigma


def collapse_qv(lambdas, t, n_paths, *, grid, seed, stride=1, workers=1, n_boot=1000):
    """QV of ``sum_i lambda_i W^i`` on a uniform partition against ``sigma^2 t``."""
    lam = np.asarray(lambdas, dtype=np.float64)
    part = Partition.uniform(grid, stride, t)

    def chunk(start, count):
        noise = sample_cylindrical(grid, lam.size, seed, count, start)
        return {"qv": quadratic_variation(combined_path(lam, noise), part)}

    qv = map_paths(chunk, n_paths, workers)["qv"]
    return summarize(qv, n_boot, seed), collapse_constant_noise(lam) ** 2 * t


@dataclass(frozen=True)
class MomentsRecord:
    """First two moments of ``int G Psi dW`` on K modes and of ``sigma int Psi dB`` on one."""

    cylindrical_mean: object
    collapsed_mean: object
    cylindrical_m2: object
    collapsed_m2: object
    analytic_m2: float

    @staticmethod
    def _overlap(a, b):
        return a.ci95[0] <= b.ci95[1] and b.ci95[0] <= a.ci95[1]

    @property
    def passed(self):
        return self._overlap(self.cylindrical_mean, self.collapsed_mean) and self._overlap(
            self.cylindrical_m2, self.collapsed_m2
        )


def collapse_moments_check(lambdas, t, n_paths, *, grid, seed, workers=1, n_boot=1000):
    """Compare ``sum_i lambda_i int Psi(W~) dW^i`` with ``sigma int Psi(B) dB`` for independent B.

    ``W~`` is the collapsed driver of the K-mode noise and ``Psi`` the
    geometric functional ``exp(x - s/2)``.  Both second moments equal
    ``sigma^2 (e^t - 1)``.
    """
    require_paths(n_paths)
    lam = np.asarray(lambdas, dtype=np.float64)
    sigma = collapse_constant_noise(lam)
    k = grid.index_of(t)
    times = grid.times()[:k]

    def chunk(start, count):
        noise = sample_cylindrical(grid, lam.size, seed, count, start)
        wt = collapsed_driver(lam, noise)[:, :k]
        psi = np.exp(wt - 0.5 * times)
        cyl = np.einsum("ns,i,nis->n", psi, lam, noise.increments[:, :, :k])
        other = sample_cylindrical(grid, 1, seed + 1, count, start)
        b = other.W()[:, 0, :k]
        col = sigma * np.einsum("ns,ns->n", np.exp(b - 0.5 * times), other.increments[:, 0, :k])
        return {"cyl": cyl, "col": col}

    d = map_paths(chunk, n_paths, workers)
    return MomentsRecord(
        summarize(d["cyl"], n_boot, seed),
        summarize(d["col"], n_boot, seed + 1),
        summarize(d["cyl"] ** 2, n_boot, seed + 2),
        summarize(d["col"] ** 2, n_boot, seed + 3),
        sigma**2 * math.expm1(t),
    )
