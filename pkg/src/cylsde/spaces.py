"""Weighted finite-dimensional stand-ins for a chain of embedded Hilbert spaces.

All four spaces V, H, U, X share one coordinate basis; each carries its own
positive weight sequence, and ``<x, y>_S = sum_i w_S[i] x_i y_i``.  Requiring
``w_V >= w_H >= w_U >= w_X`` coordinatewise makes every embedding in the
chain V -> H -> U -> X a contraction.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

SPACES = ("V", "H", "U", "X")


class DimensionError(ValueError):
    pass


def _space_index(space):
    try:
        return SPACES.index(space)
    except ValueError:
        raise ValueError(f"unknown space {space!r}; expected one of {SPACES}") from None


@dataclass(frozen=True)
class SpaceScale:
    dim: int
    weights_V: np.ndarray
    weights_H: np.ndarray
    weights_U: np.ndarray
    weights_X: np.ndarray

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError("dim must be >= 1")
        object.__setattr__(self, "dim", int(self.dim))
        ws = []
        for name in SPACES:
            w = np.array(getattr(self, "weights_" + name), dtype=np.float64)
            if w.shape != (self.dim,):
                raise DimensionError(f"weights_{name} has shape {w.shape}, expected ({self.dim},)")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ValueError(f"weights_{name} must be finite and strictly positive")
            w.setflags(write=False)
            object.__setattr__(self, "weights_" + name, w)
            ws.append(w)
        for finer, coarser, a, b in zip(SPACES, SPACES[1:], ws, ws[1:]):
            if np.any(b > a):
                raise ValueError(f"weights must satisfy {finer} >= {coarser} coordinatewise")

    @classmethod
    def uniform(cls, dim):
        ones = np.ones(dim)
        return cls(dim, ones, ones, ones, ones)

    @classmethod
    def from_weights(cls, V=None, H=None, U=None, X=None, dim=None):
        """Build a scale from whichever weight sequences are given.

        Missing sequences are filled from the nearest given neighbour so the
        chain ordering still holds (coarser spaces copy downward first).
        """
        given = {"V": V, "H": H, "U": U, "X": X}
        if dim is None:
            dim = next(len(w) for w in given.values() if w is not None)
        filled = {}
        last = None
        for name in SPACES:
            if given[name] is not None:
                last = np.asarray(given[name], dtype=np.float64)
            filled[name] = last
        first = next(filled[n] for n in SPACES if filled[n] is not None)
        for name in SPACES:
            if filled[name] is None:
                filled[name] = first
        return cls(dim, filled["V"], filled["H"], filled["U"], filled["X"])

    def weights(self, space):
        _space_index(space)
        return getattr(self, "weights_" + space)


def _conform(scale, x, what="vector"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] != scale.dim:
        raise DimensionError(f"{what} has trailing dimension {x.shape[-1:] or '()'}, expected {scale.dim}")
    return x


def inner(scale, space, x, y):
    """Weighted inner product; broadcasts over leading axes."""
    x = _conform(scale, x)
    y = _conform(scale, y)
    w = scale.weights(space)
    out = np.sum(w * x * y, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def norm(scale, space, x):
    x = _conform(scale, x)
    y = x * np.sqrt(scale.weights(space))
    out = _scaled_root(y, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def _scaled_root(y, axis):
    # divide out the largest entry first so tiny or huge inputs neither underflow nor overflow
    m = np.max(np.abs(y), axis=axis, keepdims=True, initial=0.0)
    safe = np.where(m > 0, m, 1.0)
    return np.sqrt(np.sum((y / safe) ** 2, axis=axis)) * np.squeeze(safe, axis=axis)


def hs_norm(scale, target_space, B):
    """Hilbert-Schmidt norm of an operator given by its columns ``B(e_i)``.

    ``B`` has shape (..., dim, K); column ``i`` is the image of the i-th
    basis vector of the noise space.  ``K = 0`` gives 0.
    """
    B = np.asarray(B, dtype=np.float64)
    if B.ndim < 2 or B.shape[-2] != scale.dim:
        raise DimensionError(f"operator columns must have length {scale.dim}, got shape {B.shape}")
    y = B * np.sqrt(scale.weights(target_space))[:, None]
    y = y.reshape(y.shape[:-2] + (-1,))
    out = _scaled_root(y, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def embedding_constant(scale, from_space, to_space):
    """Smallest c with ``|x|_to <= c |x|_from`` for all x."""
    i, j = _space_index(from_space), _space_index(to_space)
    if i > j:
        raise ValueError(f"{from_space} does not embed into {to_space}: chain order is V -> H -> U -> X")
    return float(np.max(np.sqrt(scale.weights(to_space) / scale.weights(from_space))))


def operator_norm(scale, matrix, source="H", target="H"):
    """Exact operator norm of ``matrix`` viewed as a map source -> target."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (scale.dim, scale.dim):
        raise DimensionError(f"matrix has shape {m.shape}, expected ({scale.dim}, {scale.dim})")
    ws = np.sqrt(scale.weights(source))
    wt = np.sqrt(scale.weights(target))
    return float(np.linalg.norm(wt[:, None] * m / ws[None, :], 2))


@dataclass(frozen=True)
class LinearOp:
    """A bounded linear map between two of the chain spaces.

    ``certified_bound``, when present, is checked on the basis vectors and on
    the exact weighted operator norm at construction.
    """

    matrix: np.ndarray
    scale: SpaceScale
    source: str = "H"
    target: str = "H"
    certified_bound: Optional[float] = None
    _norm: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (self.scale.dim, self.scale.dim):
            raise DimensionError(f"matrix has shape {m.shape}, expected ({self.scale.dim}, {self.scale.dim})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        _space_index(self.source)
        _space_index(self.target)
        exact = operator_norm(self.scale, m, self.source, self.target)
        object.__setattr__(self, "_norm", exact)
        if self.certified_bound is not None:
            bound = float(self.certified_bound)
            if bound <= 0:
                raise ValueError("certified_bound must be positive")
            eye = np.eye(self.scale.dim)
            lhs = norm(self.scale, self.target, eye @ m.T)
            rhs = bound * norm(self.scale, self.source, eye)
            if np.any(lhs > rhs * (1 + 1e-12)) or exact > bound * (1 + 1e-12):
                raise ValueError(f"certified_bound {bound} is smaller than the operator norm {exact}")

    @property
    def op_norm(self):
        return self._norm

    def __call__(self, x):
        x = _conform(self.scale, x)
        return x @ self.matrix.T
