"""The numba kernels and their numpy twins must agree."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cylsde import kernels
from cylsde._backend import HAVE_NUMBA

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def both(name, *args):
    out = {}
    for b in ("numpy", "numba"):
        with kernels.use_backend(b):
            out[b] = getattr(kernels, name)(*args)
    return out["numpy"], out["numba"]


@needs_numba
@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 64))
def test_box_muller_agrees(seed, half):
    raw = np.random.default_rng(seed).integers(0, 2**64, size=2 * half, dtype=np.uint64)
    a, b = both("box_muller", raw, 0.3)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)


@needs_numba
@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 20), st.integers(1, 3), st.integers(1, 3))
def test_ito_path_agrees(seed, n, s, d, K):
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=(n, s, d, K))
    dW = rng.normal(size=(n, K, s))
    a, b = both("ito_path", vals, dW)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
    assert np.all(a[:, 0] == 0)


@needs_numba
@pytest.mark.parametrize("scheme", ["em_affine", "heun_affine"])
def test_affine_solvers_agree(scheme):
    rng = np.random.default_rng(5)
    d, K, n, s = 3, 2, 6, 50
    A = -np.eye(d) + 0.1 * rng.normal(size=(d, d))
    a0 = rng.normal(size=d)
    M = 0.2 * rng.normal(size=(K, d, d))
    b = rng.normal(size=(K, d))
    psi0 = rng.normal(size=(n, d))
    dW = 0.1 * rng.normal(size=(n, K, s))
    (xa, ba), (xb, bb) = both(scheme, A, a0, M, b, psi0, dW, 0.01)
    assert ba == bb == -1
    np.testing.assert_allclose(xa, xb, rtol=1e-12, atol=1e-12)


def test_ito_path_oracle():
    vals = np.array([[[[1.0]], [[2.0]], [[3.0]]]])
    dW = np.array([[[0.5, -1.0, 2.0]]])
    np.testing.assert_allclose(kernels.ito_path(vals, dW)[0, :, 0], [0, 0.5, -1.5, 4.5])


def test_em_single_step_oracle():
    with kernels.use_backend("numpy"):
        states, bad = kernels.em_affine(
            np.array([[-2.0]]), np.array([1.0]), np.array([[[0.5]]]), np.array([[0.25]]),
            np.array([[1.0]]), np.array([[[0.2]]]), 0.1,
        )
    # 1 + 0.1 * (-2 + 1) + (0.5 + 0.25) * 0.2
    assert bad == -1 and states[0, 1, 0] == pytest.approx(1.05, abs=1e-15)


def test_divergence_reports_step():
    with kernels.use_backend("numpy"):
        _, bad = kernels.em_affine(
            np.array([[1e200]]), np.zeros(1), np.zeros((1, 1, 1)), np.zeros((1, 1)),
            np.array([[1e200]]), np.zeros((1, 1, 5)), 1.0,
        )
    assert bad == 1


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        kernels.ito_path(np.zeros((1, 3, 1, 1)), np.zeros((1, 1, 4)))
    with pytest.raises(ValueError):
        kernels.box_muller(np.zeros(3, dtype=np.uint64), 1.0)
    with pytest.raises(ValueError):
        kernels.set_backend("fortran")


def test_use_backend_restores():
    before = kernels.backend()
    with kernels.use_backend("numpy"):
        assert kernels.backend() == "numpy"
    assert kernels.backend() == before
