"""Euler-Maruyama for ``dPsi = A(t, Psi) dt + sum_i G_i(Psi) dW^i`` and its diagnostics.

Diffusion operators are affine, ``G_i(phi) = M_i phi + b_i``; the linear case
has ``b_i = 0`` and an additive noise column has ``M_i = 0``.  Drifts are
either affine (served by the compiled kernels) or a generic batched rule.
"""
import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .integrate import PathSampler
from .noise import CylindricalNoise, TimeGrid, sample_cylindrical
from .spaces import DimensionError, LinearOp, SpaceScale, operator_norm
from .stats import exact_mean, loglog_slope, map_paths, summarize
from .stratonovich import ito_correction

CERT_PROBES = 1000


class SolverDivergence(RuntimeError):
    def __init__(self, step):
        super().__init__(f"non-finite state at step {step}; the drift or diffusion growth bound is violated")
        self.step = step


class CertificationError(ValueError):
    pass


class DerivativeMismatchError(ValueError):
    pass


def _h_norm_sq(phi, scale):
    return np.einsum("...d,...d,d->...", phi, phi, scale.weights_H)


# -------------------------------------------------------------------- drift


@dataclass(frozen=True)
class DriftOp:
    """Drift ``A(t, phi)`` with certified growth ``|A|^2 <= C (1 + |phi|^2)`` and Lipschitz L.

    ``rule`` maps ``(t, phi)`` with ``phi`` of shape (n, dim) to (n, dim).
    Affine drifts also carry ``matrix`` and ``offset``.  Generic rules are
    certified on :data:`CERT_PROBES` random probes at construction.
    """

    rule: Callable
    dim: int
    growth: float
    lipschitz: float
    scale: SpaceScale = None
    matrix: Optional[np.ndarray] = None
    offset: Optional[np.ndarray] = None
    base: Optional["DriftOp"] = field(default=None, repr=False)
    probe_seed: int = 0

    def __post_init__(self):
        if self.scale is None:
            object.__setattr__(self, "scale", SpaceScale.uniform(self.dim))
        if self.scale.dim != self.dim:
            raise DimensionError("drift dimension does not match its scale")
        if self.growth < 0 or self.lipschitz < 0:
            raise ValueError("growth and Lipschitz constants must be nonnegative")
        if self.matrix is None:
            self._certify()

    @classmethod
    def affine(cls, matrix, offset=None, scale=None):
        m = np.array(matrix, dtype=np.float64, ndmin=2)
        d = m.shape[0]
        if m.shape != (d, d):
            raise DimensionError(f"drift matrix must be square, got {m.shape}")
        a0 = np.zeros(d) if offset is None else np.asarray(offset, dtype=np.float64).reshape(d)
        scale = scale or SpaceScale.uniform(d)
        L = operator_norm(scale, m)
        a_norm = math.sqrt(float(_h_norm_sq(a0, scale)))
        # |M x + a|^2 <= (L^2 + |a|^2)(1 + |x|^2) by Cauchy-Schwarz
        C = L * L + a_norm * a_norm
        return cls(lambda t, phi: phi @ m.T + a0, d, C, L, scale, m, a0)

    @classmethod
    def linear(cls, matrix, scale=None):
        return cls.affine(matrix, None, scale)

    @property
    def is_affine(self):
        return self.matrix is not None

    def __call__(self, t, phi):
        return np.asarray(self.rule(t, np.asarray(phi, dtype=np.float64)), dtype=np.float64)

    def _certify(self):
        rng = np.random.Generator(np.random.PCG64(self.probe_seed))
        mags = 10.0 ** rng.uniform(-3, 3, size=(CERT_PROBES, 1))
        x = rng.normal(size=(CERT_PROBES, self.dim)) * mags
        y = x + rng.normal(size=x.shape) * 10.0 ** rng.uniform(-4, 1, size=(CERT_PROBES, 1))
        t = rng.uniform(0, 1, size=CERT_PROBES)
        ax = self._batched(t, x)
        ay = self._batched(t, y)
        slack = 1 + 1e-9
        if np.any(_h_norm_sq(ax, self.scale) > self.growth * (1 + _h_norm_sq(x, self.scale)) * slack):
            raise CertificationError(f"growth bound C={self.growth} fails on a probe")
        lhs = np.sqrt(_h_norm_sq(ax - ay, self.scale))
        rhs = self.lipschitz * np.sqrt(_h_norm_sq(x - y, self.scale))
        if np.any(lhs > rhs * slack + 1e-300):
            raise CertificationError(f"Lipschitz bound L={self.lipschitz} fails on a probe")

    def _batched(self, t, x):
        # rules take a scalar time, so probes go one at a time
        return np.stack([self(ti, xi[None])[0] for ti, xi in zip(t, x)])

    def with_correction(self, G):
        """The drift ``A + 1/2 sum_i DG_i . G_i``; :meth:`without_correction` undoes it exactly."""
        if G.K == 0:
            return self
        corr_m = 0.5 * sum(G.matrices[i] @ G.matrices[i] for i in range(G.K))
        corr_b = 0.5 * sum(G.matrices[i] @ G.offsets[i] for i in range(G.K))
        extra = operator_norm(self.scale, corr_m)
        extra_b = math.sqrt(float(_h_norm_sq(corr_b, self.scale)))
        L = self.lipschitz + extra
        C = (math.sqrt(self.growth) + math.sqrt(extra * extra + extra_b * extra_b)) ** 2
        if self.is_affine:
            m = self.matrix + corr_m
            a0 = self.offset + corr_b
            return DriftOp(lambda t, phi: phi @ m.T + a0, self.dim, C, L, self.scale, m, a0, base=self)
        rule = self.rule
        return DriftOp(lambda t, phi: rule(t, phi) + ito_correction(G, phi), self.dim, C, L, self.scale,
                       base=self, probe_seed=self.probe_seed)

    def without_correction(self):
        if self.base is None:
            raise ValueError("this drift carries no correction to remove")
        return self.base


# ---------------------------------------------------------------- diffusion


@dataclass(frozen=True)
class DiffusionFamily:
    """Affine operators ``G_i(phi) = M_i phi + b_i`` with certified constants ``c_i``.

    ``c_i`` bounds ``|M_i|`` in each of V, H and U and ``|b_i|_H``, so that
    ``|G_i(phi)| <= c_i (1 + |phi|)``.  When omitted the tightest such
    value is computed.
    """

    matrices: np.ndarray
    offsets: np.ndarray
    scale: SpaceScale
    constants: np.ndarray

    def __init__(self, matrices, offsets=None, scale=None, constants=None):
        mats = [m.matrix if isinstance(m, LinearOp) else m for m in matrices]
        M = np.array(mats, dtype=np.float64)
        if M.ndim == 1 and M.size == 0:
            raise ValueError("use DiffusionFamily.zero for an empty family")
        if M.ndim != 3 or M.shape[1] != M.shape[2]:
            raise DimensionError(f"operators must be square matrices, got {M.shape}")
        K, d, _ = M.shape
        b = np.zeros((K, d)) if offsets is None else np.array(offsets, dtype=np.float64).reshape(K, d)
        scale = scale or SpaceScale.uniform(d)
        if scale.dim != d:
            raise DimensionError("diffusion dimension does not match its scale")
        exact = np.array([self._bound(scale, M[i], b[i]) for i in range(K)])
        if constants is None:
            c = exact
        else:
            c = np.asarray(constants, dtype=np.float64).reshape(K)
            if np.any(c < exact * (1 - 1e-12)):
                bad = int(np.argmax(c < exact * (1 - 1e-12)))
                raise CertificationError(f"c_{bad}={c[bad]} is below the certified bound {exact[bad]}")
        for name, val in (("matrices", M), ("offsets", b), ("constants", c)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "scale", scale)

    @staticmethod
    def _bound(scale, m, b):
        ops = max(operator_norm(scale, m, s, s) for s in ("V", "H", "U"))
        return max(ops, math.sqrt(float(_h_norm_sq(b, scale))))

    @classmethod
    def zero(cls, dim, K=1):
        return cls(np.zeros((K, dim, dim)))

    @classmethod
    def diagonal(cls, lambdas, dim, scale=None):
        """``G_i = lambda_i Id``."""
        return cls([lam * np.eye(dim) for lam in np.atleast_1d(lambdas)], scale=scale)

    @classmethod
    def additive(cls, columns, scale=None):
        """``G_i(phi) = columns[:, i]`` regardless of phi."""
        cols = np.array(columns, dtype=np.float64, ndmin=2)
        d, K = cols.shape
        return cls(np.zeros((K, d, d)), cols.T, scale)

    @property
    def K(self):
        return self.matrices.shape[0]

    @property
    def dim(self):
        return self.matrices.shape[1]

    @property
    def is_linear(self):
        return not np.any(self.offsets)

    def apply(self, i, phi):
        return np.asarray(phi) @ self.matrices[i].T + self.offsets[i]

    def columns(self, phi):
        """All ``G_i(phi)`` stacked on a trailing axis: shape (..., dim, K)."""
        phi = np.asarray(phi, dtype=np.float64)
        return np.einsum("kij,...j->...ik", self.matrices, phi) + self.offsets.T

    def truncate(self, k):
        if not 0 <= k <= self.K:
            raise ValueError(f"cannot keep {k} of {self.K} operators")
        if k == 0:
            return DiffusionFamily(np.zeros((1, self.dim, self.dim)), scale=self.scale)
        return DiffusionFamily(self.matrices[:k], self.offsets[:k], self.scale, self.constants[:k])

    def tail_sum(self, j):
        """``sum_{i > j} c_i^2`` (with i counted from 1)."""
        return math.fsum((self.constants[j:] ** 2).tolist())

    def sum_sq_constants(self):
        return math.fsum((self.constants**2).tolist())


# ------------------------------------------------------------------ solving

ITO = "ito"
STRAT = "stratonovich-converted"
HEUN = "stratonovich-heun"


@dataclass(frozen=True)
class SolutionPath:
    """States (n_paths, steps + 1, dim) of a solve together with the noise used."""

    grid: object
    states: np.ndarray
    noise: CylindricalNoise
    scheme: str
    k: int
    drift: DriftOp
    diffusion: DiffusionFamily

    @property
    def n_paths(self):
        return self.states.shape[0]

    @property
    def dim(self):
        return self.states.shape[2]

    def state_sampler(self):
        return PathSampler(self.states, name="state")

    def drift_values(self):
        """``A(t_k, Psi_k)`` on every grid point, same shape as ``states``."""
        return evaluate_drift(self.drift, self.grid.times(), self.states)

    def diffusion_values(self):
        """Columns ``G_i(Psi_k)``, shape (n, steps + 1, dim, k)."""
        return self.diffusion.truncate(self.k).columns(self.states) if self.k else np.zeros(self.states.shape + (1,))

    def to_csv(self, fh, path_index=0, seed=None):
        """Write ``step,time,coord_0..`` rows in 17 significant digits and a metadata line."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "time"] + [f"coord_{i}" for i in range(self.dim)])
        times = self.grid.times()
        for k, row in enumerate(self.states[path_index]):
            w.writerow([k, f"{times[k]:.17g}"] + [f"{x:.17g}" for x in row])
        fh.write(f"# seed={seed}, dt={self.grid.dt!r}, n={self.n_paths}\n")

    def csv_text(self, path_index=0, seed=None):
        buf = io.StringIO()
        self.to_csv(buf, path_index, seed)
        return buf.getvalue()


def evaluate_drift(drift, times, states):
    n, s, d = states.shape
    if drift.is_affine:
        return states @ drift.matrix.T + drift.offset
    return np.stack([drift(times[k], states[:, k]) for k in range(s)], axis=1)


def _prepare(G, psi0, noise, k):
    k = G.K if k is None else int(k)
    if k > noise.K:
        raise DimensionError(f"{k} diffusion operators need at least {k} noise components, got {noise.K}")
    if k > G.K:
        raise DimensionError(f"family has only {G.K} operators")
    psi0 = np.asarray(psi0, dtype=np.float64)
    if psi0.shape[-1] != G.dim:
        raise DimensionError(f"initial condition has dimension {psi0.shape[-1]}, operators act on {G.dim}")
    psi0 = np.ascontiguousarray(np.broadcast_to(psi0, (noise.n_paths, G.dim)))
    if k == 0:
        M = np.zeros((1, G.dim, G.dim))
        b = np.zeros((1, G.dim))
        dW = np.zeros((noise.n_paths, 1, noise.grid.steps))
    else:
        M, b, dW = G.matrices[:k], G.offsets[:k], noise.increments[:, :k]
    return k, psi0, M, b, dW


def _generic_em(A, M, b, psi0, dW, dt, heun=False):
    n, d = psi0.shape
    K, s = dW.shape[1], dW.shape[2]
    states = np.empty((n, s + 1, d))
    states[:, 0] = psi0
    psi = psi0.copy()
    for step in range(s):
        t = step * dt
        f0 = A(t, psi)
        acc = np.zeros((n, d))
        for i in range(K):
            acc += (psi @ M[i].T + b[i]) * dW[:, i, step, None]
        if heun:
            pred = psi + dt * f0 + acc
            f1 = A(t + dt, pred)
            acc = np.zeros((n, d))
            for i in range(K):
                g = 0.5 * ((psi @ M[i].T + b[i]) + (pred @ M[i].T + b[i]))
                acc += g * dW[:, i, step, None]
            psi = psi + 0.5 * (f0 + f1) * dt + acc
        else:
            psi = psi + dt * f0 + acc
        states[:, step + 1] = psi
        if not np.all(np.isfinite(psi)):
            return states, step + 1
    return states, -1


def _solve(A, G, psi0, noise, k, scheme, heun=False, reverse=False):
    if A.dim != G.dim:
        raise DimensionError(f"drift acts on {A.dim} coordinates, diffusion on {G.dim}")
    k, psi0, M, b, dW = _prepare(G, psi0, noise, k)
    if reverse:
        M, b, dW = M[::-1], b[::-1], dW[:, ::-1]
    dt = noise.grid.dt
    if A.is_affine:
        fn = kernels.heun_affine if heun else kernels.em_affine
        states, bad = fn(A.matrix, A.offset, M, b, psi0, dW, dt)
    else:
        with np.errstate(over="ignore", invalid="ignore"):
            states, bad = _generic_em(A, M, b, psi0, np.asarray(dW), dt, heun)
    if bad >= 0:
        raise SolverDivergence(int(bad))
    return SolutionPath(noise.grid, states, noise, scheme, k, A, G)


def solve_em(A, G, psi0, noise, k=None):
    """Euler-Maruyama with left-point diffusion using the first ``k`` operators."""
    return _solve(A, G, psi0, noise, k, ITO)


def solve_strat(A, G, psi0, noise, k=None):
    """Solve ``dPsi = A dt + G(Psi) o dW`` through its Ito form with the corrected drift."""
    Gk = G.truncate(G.K if k is None else k)
    return _solve(A.with_correction(Gk), G, psi0, noise, k, STRAT)


def solve_heun(A, G, psi0, noise, k=None):
    """Stochastic Heun scheme: a direct Stratonovich midpoint discretisation."""
    return _solve(A, G, psi0, noise, k, HEUN, heun=True)


# ----------------------------------------------------------------- studies


@dataclass(frozen=True)
class TruncationEntry:
    k: int
    j: int
    summary: object
    tail_sum: float


@dataclass(frozen=True)
class TruncationTable:
    entries: list
    ratios: dict
    flags: list

    def value(self, k, j):
        for e in self.entries:
            if e.k == k and e.j == j:
                return e.summary.mean
        raise KeyError((k, j))

    @property
    def monotone(self):
        return not self.flags


def truncation_convergence(A, G, psi0, ks, js, n_paths, t, *, grid, seed, workers=1, n_boot=1000):
    """``E sup_{r <= t} |Phi^k_r - Phi^j_r|_H^2`` on coupled noise for every k >= j.

    ``ratios[(k, j)]`` holds the observed drop from j to the next listed j
    divided by the drop of the tail sums ``sum_{i>j} c_i^2``.  A flag is
    raised where the error grows with j beyond the bootstrap interval.
    """
    ks, js = sorted(set(ks)), sorted(set(js))
    K = max(ks)
    if K > G.K:
        raise DimensionError(f"k={K} exceeds the {G.K} available operators")
    kt = grid.index_of(t)
    scale = G.scale
    pairs = [(k, j) for k in ks for j in js if j <= k]

    def chunk(start, count):
        noise = sample_cylindrical(grid, max(K, 1), seed, count, start)
        sols = {m: solve_em(A, G, psi0, noise, m).states[:, : kt + 1] for m in set(ks) | set(js)}
        out = {}
        for k, j in pairs:
            diff = sols[k] - sols[j]
            out[f"{k},{j}"] = _h_norm_sq(diff, scale).max(axis=1)
        return out

    data = map_paths(chunk, n_paths, workers)
    entries = [TruncationEntry(k, j, summarize(data[f"{k},{j}"], n_boot, seed), G.tail_sum(j) - G.tail_sum(k))
               for k, j in pairs]
    ratios, flags = {}, []
    for k in ks:
        row = [e for e in entries if e.k == k]
        for a, b in zip(row, row[1:]):
            if b.summary.mean > 0 and b.tail_sum > 0:
                ratios[(k, a.j)] = (a.summary.mean / b.summary.mean, a.tail_sum / b.tail_sum)
            if b.summary.ci95[0] > a.summary.ci95[1]:
                flags.append((k, a.j, b.j))
    return TruncationTable(entries, ratios, flags)


@dataclass(frozen=True)
class UniquenessReport:
    """``other_seed_differs`` is trivially true for noise-free equations."""

    identical: bool
    first_divergent_step: Optional[int]
    reorder_max_diff: float
    other_seed_differs: bool

    @property
    def passed(self):
        return self.identical and self.reorder_max_diff <= 1e-10 and self.other_seed_differs


def _first_divergence(a, b):
    neq = np.any(a != b, axis=(0, 2))
    return int(np.argmax(neq)) if neq.any() else None


def uniqueness_check(A, G, psi0, seed, grid, n_paths=8, k=None):
    """Two independent solves from the same seed must agree bit for bit."""
    K = max(G.K if k is None else k, 1)
    first = solve_em(A, G, psi0, sample_cylindrical(grid, K, seed, n_paths), k)
    second = solve_em(A, G, psi0, sample_cylindrical(grid, K, seed, n_paths), k)
    step = _first_divergence(first.states, second.states)
    reordered = _solve(A, G, psi0, sample_cylindrical(grid, K, seed, n_paths), k, ITO, reverse=True)
    reorder = float(np.max(np.abs(reordered.states - first.states)))
    other = solve_em(A, G, psi0, sample_cylindrical(grid, K, seed + 1, n_paths), k)
    # with no noise at all every seed gives the same path
    noise_free = not np.any(G.matrices[: first.k]) and not np.any(G.offsets[: first.k])
    differs = noise_free or bool(np.any(other.states != first.states))
    return UniquenessReport(step is None, step, reorder, differs)


@dataclass(frozen=True)
class Envelope:
    """Grönwall bounds for an equation with affine growth.

    With ``<A(t, phi), phi>_H <= kappa (1 + |phi|^2)``, ``S = sum_i (|M_i| + |b_i|)^2``
    and ``beta = 2 kappa + S`` the drift part of ``d|Psi|^2`` is at most
    ``beta (1 + |Psi|^2)``.  Davis' inequality (constant 3) and Young's
    inequality give ``E sup_{r<=t} |Psi_r|^2 <= c (E|Psi_0|^2 + 1)`` with
    ``c = 2 exp(2 (beta + 18 S) t)``; without the supremum
    ``E|Psi_t|^2 <= (E|Psi_0|^2 + 1) e^{beta t} - 1``.
    """

    kappa: float
    S: float
    t: float

    @property
    def beta(self):
        return 2.0 * self.kappa + self.S

    @property
    def c(self):
        return 2.0 * math.exp(2.0 * (self.beta + 18.0 * self.S) * self.t)

    def sup_bound(self, m0):
        return self.c * (m0 + 1.0)

    def point_bound(self, m0, t=None):
        t = self.t if t is None else t
        return (m0 + 1.0) * math.exp(self.beta * t) - 1.0


def monotonicity_constant(A):
    """kappa with ``<A(t, phi), phi>_H <= kappa (1 + |phi|^2)``.

    Affine drifts use the top eigenvalue of the H-symmetric part of the
    matrix; generic drifts fall back to ``sqrt(C)`` from the growth bound.
    """
    if not A.is_affine:
        return math.sqrt(A.growth)
    r = np.sqrt(A.scale.weights_H)
    sym = r[:, None] * A.matrix / r[None, :]
    top = float(np.max(np.linalg.eigvalsh(0.5 * (sym + sym.T))))
    a_norm = math.sqrt(float(_h_norm_sq(A.offset, A.scale)))
    return max(top, 0.0) + 0.5 * a_norm


def gronwall_envelope(A, G, t):
    S = math.fsum(
        (operator_norm(G.scale, G.matrices[i]) + math.sqrt(float(_h_norm_sq(G.offsets[i], G.scale)))) ** 2
        for i in range(G.K)
    )
    return Envelope(monotonicity_constant(A), S, t)


# --------------------------------------------------------------- residuals


def _check_residual_inputs(sol, eta, B, k):
    if eta.shape[:2] != sol.states.shape[:2] or B.shape[:2] != sol.states.shape[:2]:
        raise DimensionError("drift and diffusion paths must share the solution grid")
    if B.shape[3] > sol.noise.K:
        raise DimensionError("diffusion has more columns than noise components")


def _as_values(x, sol, operator):
    if x is None:
        return sol.diffusion_values() if operator else sol.drift_values()
    if isinstance(x, PathSampler) or hasattr(x, "evaluate"):
        return x.evaluate(sol.noise, sol.grid.steps, include_end=True)
    return np.asarray(x, dtype=np.float64)


def energy_residual(sol, eta=None, B=None, t=None, space="H"):
    """Per-path residual of the discrete energy identity at time t.

    ``|Psi_t|^2 - |Psi_0|^2 - sum_k (2 <eta_k, Psi_k> + |B_k|_HS^2) dt - 2 sum_k <B_k dW_k, Psi_k>``
    with all sums over left points.  ``eta`` and ``B`` default to the drift
    and diffusion of the solve evaluated along the solution.
    """
    t = sol.grid.horizon if t is None else t
    k = sol.grid.index_of(t)
    eta = _as_values(eta, sol, False)
    B = _as_values(B, sol, True)
    _check_residual_inputs(sol, eta, B, k)
    w = sol.diffusion.scale.weights(space)
    psi = sol.states[:, : k + 1]
    left = psi[:, :k]
    dt = sol.grid.dt
    dW = sol.noise.increments[:, : B.shape[3], :k]
    ends = np.einsum("nd,nd,d->n", psi[:, -1], psi[:, -1], w) - np.einsum("nd,nd,d->n", psi[:, 0], psi[:, 0], w)
    drift = np.einsum("nsd,nsd,d->n", eta[:, :k], left, w) * (2 * dt)
    hs = np.einsum("nsdi,nsdi,d->n", B[:, :k], B[:, :k], w) * dt
    noise_vec = np.einsum("nsdi,nis->nsd", B[:, :k], dW)
    mart = 2 * np.einsum("nsd,nsd,d->n", noise_vec, left, w)
    return ends - drift - hs - mart


def norm_squared_functional(scale, space="H"):
    """``F(x) = |x|_space^2`` with its time derivative, gradient and Hessian."""
    w = np.array(scale.weights(space))
    F = lambda t, x: np.einsum("...d,...d,d->...", x, x, w)
    F_t = lambda t, x: np.zeros(np.shape(x)[:-1])
    F_x = lambda t, x: 2 * w * x
    F_xx = lambda t, x: np.broadcast_to(2 * np.diag(w), np.shape(x)[:-1] + (w.size, w.size))
    return F, F_t, F_x, F_xx


def validate_derivatives(F, F_t, F_x, F_xx, dim, seed=0, n_points=10, step=1e-5, rtol=1e-4, t_max=1.0):
    """Central-difference spot check of user derivative rules at random points."""
    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(n_points):
        x = rng.normal(size=dim)
        t = float(rng.uniform(step, t_max))
        g = np.asarray(F_x(t, x[None]), dtype=np.float64)[0]
        H = np.asarray(F_xx(t, x[None]), dtype=np.float64)[0]
        ft = float(np.asarray(F_t(t, x[None])).ravel()[0])
        fd_t = float((np.asarray(F(t + step, x[None])) - np.asarray(F(t - step, x[None]))).ravel()[0]) / (2 * step)
        eye = np.eye(dim) * step
        fd_g = (np.asarray(F(t, x + eye)) - np.asarray(F(t, x - eye))).ravel() / (2 * step)
        fd_H = (np.asarray(F_x(t, x + eye)) - np.asarray(F_x(t, x - eye))) / (2 * step)
        for name, exact, approx in (("F_t", ft, fd_t), ("F_x", g, fd_g), ("F_xx", H, fd_H.T)):
            err = np.max(np.abs(np.asarray(exact) - approx))
            if err > rtol * max(1.0, float(np.max(np.abs(exact)))):
                raise DerivativeMismatchError(f"{name} disagrees with finite differences by {err:.3g}")


def ito_formula_residual(F, F_t, F_x, F_xx, sol, t=None, eta=None, B=None, validate=True, seed=0):
    """Per-path residual of the discrete Ito formula for a user functional F.

    ``F(t, x)`` takes x of shape (..., dim); ``F_x`` returns the coordinate
    gradient and ``F_xx`` the coordinate Hessian.  The trace term is
    ``sum_i <F_xx B e_i, B e_i>``.
    """
    t = sol.grid.horizon if t is None else t
    k = sol.grid.index_of(t)
    if validate:
        validate_derivatives(F, F_t, F_x, F_xx, sol.dim, seed=seed, t_max=max(t, 1e-3))
    eta = _as_values(eta, sol, False)
    B = _as_values(B, sol, True)
    _check_residual_inputs(sol, eta, B, k)
    dt = sol.grid.dt
    times = sol.grid.times()[:k]
    psi = sol.states[:, : k + 1]
    left = psi[:, :k]
    tt = np.broadcast_to(times, left.shape[:2])
    grad = np.asarray(F_x(tt, left), dtype=np.float64)
    hess = np.asarray(F_xx(tt, left), dtype=np.float64)
    dW = sol.noise.increments[:, : B.shape[3], :k]
    Bl = B[:, :k]
    ends = np.asarray(F(t, psi[:, -1])) - np.asarray(F(0.0, psi[:, 0]))
    time_part = np.asarray(F_t(tt, left)).sum(axis=1) * dt
    drift = np.einsum("nsd,nsd->n", grad, eta[:, :k]) * dt
    trace = 0.5 * np.einsum("nsdi,nsde,nsei->n", Bl, hess, Bl) * dt
    mart = np.einsum("nsd,nsd->n", grad, np.einsum("nsdi,nis->nsd", Bl, dW))
    return ends - time_part - drift - trace - mart


@dataclass(frozen=True)
class ResidualLadder:
    dts: list
    rms: list
    mean_abs: list
    rms_ratios: list
    bias_ratios: list


def energy_ladder(A, G, psi0, t, dts, n_paths, *, seed, workers=1):
    """RMS and mean residual on coupled noise for a dt ladder (coarse to fine)."""
    dts = list(dts)
    fine = min(dts)
    grid = TimeGrid.from_horizon(t, fine)
    factors = [int(round(d / fine)) for d in dts]

    def chunk(start, count):
        noise = sample_cylindrical(grid, G.K, seed, count, start)
        out = {}
        for i, f in enumerate(factors):
            nz = noise.coarsen(f) if f > 1 else noise
            out[f"r{i}"] = energy_residual(solve_em(A, G, psi0, nz))
        return out

    data = map_paths(chunk, n_paths, workers)
    rms = [math.sqrt(exact_mean(data[f"r{i}"] ** 2)) for i in range(len(dts))]
    bias = [abs(exact_mean(data[f"r{i}"])) for i in range(len(dts))]
    rr = [a / b for a, b in zip(rms, rms[1:])]
    br = [a / b if b > 0 else float("inf") for a, b in zip(bias, bias[1:])]
    return ResidualLadder(dts, rms, bias, rr, br)


def strat_gap_ladder(A, G, psi0, t, dts, n_paths, *, seed, workers=1):
    """RMS gap at t between the Heun (midpoint) solve and the corrected Euler solve.

    Returns ``(dts, gaps, slope)`` with the log-log slope of gap against dt.
    """
    dts = list(dts)
    fine = min(dts)
    grid = TimeGrid.from_horizon(t, fine)
    factors = [int(round(d / fine)) for d in dts]

    def chunk(start, count):
        noise = sample_cylindrical(grid, G.K, seed, count, start)
        out = {}
        for i, f in enumerate(factors):
            nz = noise.coarsen(f) if f > 1 else noise
            a = solve_heun(A, G, psi0, nz).states[:, -1]
            b = solve_strat(A, G, psi0, nz).states[:, -1]
            out[f"g{i}"] = _h_norm_sq(a - b, G.scale)
        return out

    data = map_paths(chunk, n_paths, workers)
    gaps = [math.sqrt(exact_mean(data[f"g{i}"])) for i in range(len(dts))]
    return dts, gaps, loglog_slope(dts, gaps)
