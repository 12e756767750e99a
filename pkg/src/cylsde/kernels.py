"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The active implementation is chosen at import time from ``CYLSDE_NO_NUMBA``
(see :mod:`cylsde._backend`) and can be switched with :func:`use_backend`.
Both implementations follow the same summation order; they agree to a few
ulps but are not guaranteed to be bit-identical (libm differences).
"""
from contextlib import contextmanager

import numpy as np

from ._backend import DEFAULT_BACKEND, HAVE_NUMBA, njit

_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0


# ---------------------------------------------------------------- numpy twins


def box_muller_numpy(raw, scale):
    u = (raw >> np.uint64(11)).astype(np.float64) * _INV_2_53
    u1 = 1.0 - u[0::2]
    u2 = u[1::2]
    rad = np.sqrt(-2.0 * np.log(u1)) * scale
    ang = _TWO_PI * u2
    out = np.empty(raw.shape[0], dtype=np.float64)
    out[0::2] = rad * np.cos(ang)
    out[1::2] = rad * np.sin(ang)
    return out


def ito_path_numpy(vals, dW):
    n, s, d, _ = vals.shape
    out = np.zeros((n, s + 1, d))
    incr = np.einsum("nsdk,nks->nsd", vals, dW)
    np.cumsum(incr, axis=1, out=out[:, 1:, :])
    return out


def _affine_apply(psi, M, b, k):
    return psi @ M[k].T + b[k]


def em_affine_numpy(A, a0, M, b, psi0, dW, dt):
    n, d = psi0.shape
    K, s = dW.shape[1], dW.shape[2]
    states = np.empty((n, s + 1, d))
    states[:, 0] = psi0
    psi = psi0.copy()
    for step in range(s):
        drift = psi @ A.T + a0
        acc = np.zeros((n, d))
        for k in range(K):
            acc += _affine_apply(psi, M, b, k) * dW[:, k, step, None]
        psi = psi + dt * drift + acc
        states[:, step + 1] = psi
        if not np.all(np.isfinite(psi)):
            return states, step + 1
    return states, -1


def heun_affine_numpy(A, a0, M, b, psi0, dW, dt):
    n, d = psi0.shape
    K, s = dW.shape[1], dW.shape[2]
    states = np.empty((n, s + 1, d))
    states[:, 0] = psi0
    psi = psi0.copy()
    for step in range(s):
        f0 = psi @ A.T + a0
        acc0 = np.zeros((n, d))
        for k in range(K):
            acc0 += _affine_apply(psi, M, b, k) * dW[:, k, step, None]
        pred = psi + dt * f0 + acc0
        f1 = pred @ A.T + a0
        acc = np.zeros((n, d))
        for k in range(K):
            g = 0.5 * (_affine_apply(psi, M, b, k) + _affine_apply(pred, M, b, k))
            acc += g * dW[:, k, step, None]
        psi = psi + 0.5 * (f0 + f1) * dt + acc
        states[:, step + 1] = psi
        if not np.all(np.isfinite(psi)):
            return states, step + 1
    return states, -1


# ---------------------------------------------------------------- numba path


@njit(cache=True, nogil=True)
def box_muller_numba(raw, scale):
    m = raw.shape[0]
    out = np.empty(m, dtype=np.float64)
    for j in range(0, m, 2):
        u1 = 1.0 - np.float64(raw[j] >> np.uint64(11)) * _INV_2_53
        u2 = np.float64(raw[j + 1] >> np.uint64(11)) * _INV_2_53
        rad = np.sqrt(-2.0 * np.log(u1)) * scale
        ang = _TWO_PI * u2
        out[j] = rad * np.cos(ang)
        out[j + 1] = rad * np.sin(ang)
    return out


@njit(cache=True, nogil=True)
def ito_path_numba(vals, dW):
    n, s, d, K = vals.shape
    out = np.zeros((n, s + 1, d))
    for p in range(n):
        for step in range(s):
            for i in range(d):
                incr = 0.0
                for k in range(K):
                    incr += vals[p, step, i, k] * dW[p, k, step]
                out[p, step + 1, i] = out[p, step, i] + incr
    return out


@njit(cache=True, nogil=True)
def _affine_into(out, psi, M, b, k):
    d = psi.shape[0]
    for i in range(d):
        acc = 0.0
        for j in range(d):
            acc += M[k, i, j] * psi[j]
        out[i] = acc + b[k, i]


@njit(cache=True, nogil=True)
def _drift_into(out, psi, A, a0):
    d = psi.shape[0]
    for i in range(d):
        acc = 0.0
        for j in range(d):
            acc += A[i, j] * psi[j]
        out[i] = acc + a0[i]


@njit(cache=True, nogil=True)
def em_affine_numba(A, a0, M, b, psi0, dW, dt):
    n, d = psi0.shape
    K = dW.shape[1]
    s = dW.shape[2]
    states = np.empty((n, s + 1, d))
    bad = -1
    drift = np.empty(d)
    g = np.empty(d)
    noise = np.empty(d)
    for p in range(n):
        psi = psi0[p].copy()
        states[p, 0] = psi
        for step in range(s):
            _drift_into(drift, psi, A, a0)
            noise[:] = 0.0
            for k in range(K):
                _affine_into(g, psi, M, b, k)
                for i in range(d):
                    noise[i] += g[i] * dW[p, k, step]
            finite = True
            for i in range(d):
                psi[i] = psi[i] + dt * drift[i] + noise[i]
                if not np.isfinite(psi[i]):
                    finite = False
            states[p, step + 1] = psi
            if not finite:
                if bad < 0 or step + 1 < bad:
                    bad = step + 1
                for r in range(step + 2, s + 1):
                    states[p, r] = np.nan
                break
    return states, bad


@njit(cache=True, nogil=True)
def heun_affine_numba(A, a0, M, b, psi0, dW, dt):
    n, d = psi0.shape
    K = dW.shape[1]
    s = dW.shape[2]
    states = np.empty((n, s + 1, d))
    bad = -1
    f0 = np.empty(d)
    f1 = np.empty(d)
    g0 = np.empty(d)
    g1 = np.empty(d)
    acc0 = np.empty(d)
    acc = np.empty(d)
    pred = np.empty(d)
    for p in range(n):
        psi = psi0[p].copy()
        states[p, 0] = psi
        for step in range(s):
            _drift_into(f0, psi, A, a0)
            acc0[:] = 0.0
            for k in range(K):
                _affine_into(g0, psi, M, b, k)
                for i in range(d):
                    acc0[i] += g0[i] * dW[p, k, step]
            for i in range(d):
                pred[i] = psi[i] + dt * f0[i] + acc0[i]
            _drift_into(f1, pred, A, a0)
            acc[:] = 0.0
            for k in range(K):
                _affine_into(g0, psi, M, b, k)
                _affine_into(g1, pred, M, b, k)
                for i in range(d):
                    acc[i] += 0.5 * (g0[i] + g1[i]) * dW[p, k, step]
            finite = True
            for i in range(d):
                psi[i] = psi[i] + 0.5 * (f0[i] + f1[i]) * dt + acc[i]
                if not np.isfinite(psi[i]):
                    finite = False
            states[p, step + 1] = psi
            if not finite:
                if bad < 0 or step + 1 < bad:
                    bad = step + 1
                for r in range(step + 2, s + 1):
                    states[p, r] = np.nan
                break
    return states, bad


# ---------------------------------------------------------------- dispatch

_IMPLS = {
    "numpy": {
        "box_muller": box_muller_numpy,
        "ito_path": ito_path_numpy,
        "em_affine": em_affine_numpy,
        "heun_affine": heun_affine_numpy,
    },
}
if HAVE_NUMBA:
    _IMPLS["numba"] = {
        "box_muller": box_muller_numba,
        "ito_path": ito_path_numba,
        "em_affine": em_affine_numba,
        "heun_affine": heun_affine_numba,
    }

_active = DEFAULT_BACKEND


def backend():
    """Name of the backend currently serving the kernels."""
    return _active


def set_backend(name):
    global _active
    if name not in _IMPLS:
        raise ValueError(f"unknown or unavailable backend {name!r}")
    _active = name


@contextmanager
def use_backend(name):
    previous = _active
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def _f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def box_muller(raw, scale):
    """Map an even-length array of raw uint64 draws to N(0, scale**2) normals."""
    raw = np.ascontiguousarray(raw, dtype=np.uint64)
    if raw.shape[0] % 2:
        raise ValueError("box_muller needs an even number of raw draws")
    return _IMPLS[_active]["box_muller"](raw, float(scale))


def ito_path(vals, dW):
    """Running left-point sums.

    ``vals`` has shape (n, s, d, K) holding integrand columns at the left
    points, ``dW`` has shape (n, K, s).  Returns (n, s + 1, d) with a leading
    zero.
    """
    # no contiguity copy: broadcast (zero-stride) integrands stay cheap
    vals = np.asarray(vals, dtype=np.float64)
    dW = np.asarray(dW, dtype=np.float64)
    if vals.ndim != 4 or dW.ndim != 3 or vals.shape[0] != dW.shape[0] or vals.shape[3] != dW.shape[1] or vals.shape[1] != dW.shape[2]:
        raise ValueError(f"shape mismatch: integrand {vals.shape} vs increments {dW.shape}")
    return _IMPLS[_active]["ito_path"](vals, dW)


def em_affine(A, a0, M, b, psi0, dW, dt):
    """Euler-Maruyama for dX = (A X + a0) dt + sum_k (M_k X + b_k) dW^k.

    Returns ``(states, bad_step)``; ``bad_step`` is -1 or the first step index
    producing a non-finite state.
    """
    # overflow is reported through bad_step, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        return _IMPLS[_active]["em_affine"](_f64(A), _f64(a0), _f64(M), _f64(b), _f64(psi0), _f64(dW), float(dt))


def heun_affine(A, a0, M, b, psi0, dW, dt):
    """Stochastic Heun (Stratonovich midpoint) scheme, same layout as :func:`em_affine`."""
    # overflow is reported through bad_step, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        return _IMPLS[_active]["heun_affine"](_f64(A), _f64(a0), _f64(M), _f64(b), _f64(psi0), _f64(dW), float(dt))
