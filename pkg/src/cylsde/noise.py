"""Brownian and truncated cylindrical Brownian noise on a uniform time grid.

Random streams are counter based.  Component ``i`` of a run seeded with
``master_seed`` owns a Philox key derived from ``(master_seed, i)``; path ``p``
owns a fixed block of the counter space.  A given (seed, path, component)
therefore always yields the same increments, however paths are chunked or
scheduled.
"""
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from . import kernels
from .spaces import SpaceScale, DimensionError
from .stats import exact_mean, map_paths

_MAGIC = b"CYLN"
_HEADER = struct.Struct("<4sIQd")


class OffGridError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    steps: int

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ValueError("dt must be a positive finite number")
        if int(self.steps) < 1:
            raise ValueError("steps must be >= 1")
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "steps", int(self.steps))

    @classmethod
    def from_horizon(cls, t_final, dt):
        steps = int(round(t_final / dt))
        if steps < 1 or abs(steps * dt - t_final) > 1e-9 * max(1.0, t_final):
            raise OffGridError(f"horizon {t_final} is not a multiple of dt={dt}")
        return cls(dt, steps)

    @property
    def horizon(self):
        return self.dt * self.steps

    def times(self):
        return np.arange(self.steps + 1) * self.dt

    def index_of(self, t):
        k = int(round(t / self.dt))
        if k < 0 or k > self.steps or abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise OffGridError(f"time {t} is not a grid point of dt={self.dt}, steps={self.steps}")
        return k

    def coarsen(self, factor):
        if factor < 1 or self.steps % factor:
            raise ValueError(f"cannot coarsen {self.steps} steps by {factor}")
        return TimeGrid(self.dt * factor, self.steps // factor)


@dataclass(frozen=True)
class RngSpec:
    master_seed: int
    stream: tuple = (0, 0)  # (path_index, component_index)


@lru_cache(maxsize=1024)
def _stream_key(master_seed, component):
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(component),))
    return seq.generate_state(2, np.uint64)


def _stride(steps):
    # Philox emits four 64-bit words per counter value; Box-Muller needs pairs.
    return 4 * ((steps + 3) // 4)


def increments(grid, master_seed, component, first_path=0, n_paths=1):
    """N(0, dt) increments, shape (n_paths, steps), for one noise component."""
    stride = _stride(grid.steps)
    counter = np.array([first_path * (stride // 4), 0, 0, 0], dtype=np.uint64)
    bitgen = np.random.Philox(key=_stream_key(master_seed, component), counter=counter)
    raw = bitgen.random_raw(n_paths * stride)
    normals = kernels.box_muller(raw, np.sqrt(grid.dt))
    return normals.reshape(n_paths, stride)[:, : grid.steps]


def sample_brownian(grid, rng):
    """One Brownian path W_0 = 0, W_1, ..., W_steps for the stream in ``rng``."""
    path, component = rng.stream
    dW = increments(grid, rng.master_seed, component, path, 1)[0]
    return np.concatenate([[0.0], np.cumsum(dW)])


@dataclass(frozen=True)
class CylindricalNoise:
    """K independent Brownian components for a batch of paths.

    ``increments`` has shape (n_paths, K, steps).
    """

    grid: TimeGrid
    increments: np.ndarray
    master_seed: Optional[int] = None
    first_path: int = 0

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=np.float64)
        if inc.ndim == 2:
            inc = inc[None]
        if inc.ndim != 3 or inc.shape[2] != self.grid.steps:
            raise DimensionError(f"increments shape {inc.shape} does not match grid steps {self.grid.steps}")
        if inc.shape[1] < 1:
            raise ValueError("K must be >= 1")
        object.__setattr__(self, "increments", inc)

    @property
    def K(self):
        return self.increments.shape[1]

    @property
    def n_paths(self):
        return self.increments.shape[0]

    def W(self):
        """Cumulative paths, shape (n_paths, K, steps + 1), W_0 = 0."""
        n, K, s = self.increments.shape
        out = np.zeros((n, K, s + 1))
        np.cumsum(self.increments, axis=2, out=out[:, :, 1:])
        return out

    def W_at(self, t):
        k = self.grid.index_of(t)
        return self.increments[:, :, :k].sum(axis=2)

    def truncate(self, k):
        if not 1 <= k <= self.K:
            raise ValueError(f"cannot keep {k} of {self.K} components")
        return CylindricalNoise(self.grid, self.increments[:, :k], self.master_seed, self.first_path)

    def paths(self, index):
        inc = self.increments[index]
        if inc.ndim == 2:
            inc = inc[None]
        return CylindricalNoise(self.grid, inc, self.master_seed, self.first_path)

    def coarsen(self, factor):
        """Same Brownian paths observed on a grid ``factor`` times coarser."""
        grid = self.grid.coarsen(factor)
        n, K, s = self.increments.shape
        inc = self.increments.reshape(n, K, s // factor, factor).sum(axis=3)
        return CylindricalNoise(grid, inc, self.master_seed, self.first_path)


def sample_cylindrical(grid, K, master_seed, n_paths=1, first_path=0):
    if K < 1:
        raise ValueError("K must be >= 1")
    inc = np.empty((n_paths, K, grid.steps))
    for i in range(K):
        inc[:, i, :] = increments(grid, master_seed, i, first_path, n_paths)
    return CylindricalNoise(grid, inc, master_seed, first_path)


def dump_increments(noise, fh, path_index=0):
    """Write one path's increments: 24-byte header then (component, step) float64 LE."""
    inc = np.ascontiguousarray(noise.increments[path_index], dtype="<f8")
    fh.write(_HEADER.pack(_MAGIC, noise.K, noise.grid.steps, noise.grid.dt))
    fh.write(inc.tobytes(order="C"))


def load_increments(fh):
    header = fh.read(_HEADER.size)
    if len(header) != _HEADER.size:
        raise ValueError("truncated header")
    magic, K, steps, dt = _HEADER.unpack(header)
    if magic != _MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    body = fh.read(8 * K * steps)
    if len(body) != 8 * K * steps:
        raise ValueError("truncated increment block")
    inc = np.frombuffer(body, dtype="<f8").reshape(K, steps).astype(np.float64)
    return CylindricalNoise(TimeGrid(dt, steps), inc[None])


@dataclass(frozen=True)
class QSpec:
    eigenvalues: np.ndarray

    def __post_init__(self):
        lam = np.array(self.eigenvalues, dtype=np.float64).ravel()
        if lam.size < 1 or np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("eigenvalues must be finite and nonnegative")
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def K(self):
        return self.eigenvalues.size

    @property
    def trace(self):
        return float(self.eigenvalues.sum())


def _rep_scale(q, scale):
    scale = scale or SpaceScale.uniform(q.K)
    if q.K > scale.dim:
        raise DimensionError(f"{q.K} eigenvalues exceed space dimension {scale.dim}")
    return scale


def regular_representation(q, noise, t, scale=None):
    """Coordinates of sum_i sqrt(lambda_i) e_i W^i_t, shape (n_paths, dim).

    ``e_i`` is the i-th H-orthonormal basis vector, i.e. the i-th coordinate
    vector divided by ``sqrt(weights_H[i])``.
    """
    scale = _rep_scale(q, scale)
    if noise.K != q.K:
        raise DimensionError(f"noise has {noise.K} components, Q has {q.K} eigenvalues")
    Wt = noise.W_at(t)
    out = np.zeros((noise.n_paths, scale.dim))
    out[:, : q.K] = np.sqrt(q.eigenvalues) * Wt / np.sqrt(scale.weights_H[: q.K])
    return out


def q_pairing(q, g, h, scale=None):
    """<Q g, h>_H for the diagonal Q of ``q``."""
    scale = _rep_scale(q, scale)
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    K = q.K
    return float(np.sum(q.eigenvalues * scale.weights_H[:K] * g[:K] * h[:K]))


def covariance_samples(q, n_paths, g, h, t, s, *, grid, seed, scale=None, workers=1):
    scale = _rep_scale(q, scale)
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    grid.index_of(t)
    grid.index_of(s)

    def chunk(start, count):
        noise = sample_cylindrical(grid, q.K, seed, count, start)
        xt = regular_representation(q, noise, t, scale)
        xs = regular_representation(q, noise, s, scale)
        wg = scale.weights_H * g
        wh = scale.weights_H * h
        return {"prod": (xt @ wg) * (xs @ wh)}

    return map_paths(chunk, n_paths, workers)["prod"]


def covariance_estimate(q, n_paths, g, h, t, s, *, grid, seed, scale=None, workers=1):
    """Monte Carlo estimate of E[X_g(t) X_h(s)], X_g(t) = <X(t), g>_H."""
    if n_paths <= 0:
        raise ValueError("covariance_estimate needs at least one path")
    return exact_mean(covariance_samples(q, n_paths, g, h, t, s, grid=grid, seed=seed, scale=scale, workers=workers))
