import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cylsde.noise import (
    CylindricalNoise, OffGridError, QSpec, RngSpec, TimeGrid, covariance_estimate, dump_increments, increments,
    load_increments, q_pairing, regular_representation, sample_brownian, sample_cylindrical,
)
from cylsde.spaces import SpaceScale


def test_brownian_starts_at_zero():
    for seed in (0, 1, 2**63):
        assert sample_brownian(TimeGrid(0.01, 10), RngSpec(seed, (3, 0)))[0] == 0.0


def test_brownian_terminal_moments(grid):
    W1 = sample_cylindrical(grid, 1, 11, 100_000).W_at(1.0)[:, 0]
    assert abs(W1.mean()) <= 3 * math.sqrt(1.0 / 100_000)
    assert abs(W1.var() - 1.0) <= 0.02


def test_increment_variance_matches_dt():
    g = TimeGrid(0.25, 40)
    dW = increments(g, 5, 0, 0, 20_000)
    assert abs(dW.var() / 0.25 - 1) < 0.01


def test_k1_reduces_to_brownian(grid):
    noise = sample_cylindrical(grid, 1, 7, 3)
    for p in range(3):
        assert np.array_equal(noise.W()[p, 0], sample_brownian(grid, RngSpec(7, (p, 0))))


def test_same_seed_bit_identical(grid):
    a = sample_cylindrical(grid, 3, 99, 10)
    b = sample_cylindrical(grid, 3, 99, 10)
    assert np.array_equal(a.increments, b.increments)
    c = sample_cylindrical(grid, 3, 100, 10)
    assert not np.array_equal(a.increments, c.increments)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(1, 40), st.integers(0, 50), st.integers(1, 30))
def test_chunking_does_not_change_streams(seed, steps, first, count):
    g = TimeGrid(0.1, steps)
    whole = increments(g, seed, 1, first, count)
    parts = np.vstack([increments(g, seed, 1, p, 1) for p in range(first, first + count)])
    assert np.array_equal(whole, parts)


def test_components_uncorrelated(grid):
    W = sample_cylindrical(grid, 2, 3, 100_000).W_at(1.0)
    corr = np.corrcoef(W[:, 0], W[:, 1])[0, 1]
    assert abs(corr) <= 0.02
    assert abs(np.mean(W[:, 0] * W[:, 1])) <= 3 / math.sqrt(100_000) * 1.0


def test_increment_kurtosis():
    g = TimeGrid(1.0, 100)
    x = increments(g, 2024, 0, 0, 10_000).ravel()
    kurt = np.mean(x**4) / np.mean(x**2) ** 2
    assert abs(kurt - 3) <= 0.1


def test_regular_representation_examples(grid):
    noise = sample_cylindrical(grid, 2, 1, 5)
    zero = regular_representation(QSpec([0.0, 0.0]), noise, 1.0, SpaceScale.uniform(3))
    assert np.all(zero == 0)
    one = regular_representation(QSpec([1.0, 0.0]), noise, 1.0, SpaceScale.uniform(3))
    assert np.array_equal(one[:, 0], noise.W_at(1.0)[:, 0])
    assert np.all(one[:, 1:] == 0)


def test_regular_representation_trace(grid):
    noise = sample_cylindrical(grid, 2, 8, 100_000)
    X = regular_representation(QSpec([0.5, 0.25]), noise, 1.0)
    assert abs(np.mean(np.sum(X * X, axis=1)) / 0.75 - 1) <= 0.03


def test_regular_representation_weighted_basis():
    # with H weights the coordinates scale by 1/sqrt(w) so the H norm is unchanged
    g = TimeGrid(0.1, 10)
    noise = sample_cylindrical(g, 2, 4, 4)
    s = SpaceScale.from_weights(V=[4.0, 9.0], H=[4.0, 9.0])
    X = regular_representation(QSpec([1.0, 1.0]), noise, 1.0, s)
    assert np.allclose(np.sum(s.weights_H * X * X, axis=1), np.sum(noise.W_at(1.0) ** 2, axis=1))


def test_off_grid_time_rejected(grid):
    noise = sample_cylindrical(grid, 1, 1, 1)
    with pytest.raises(OffGridError):
        regular_representation(QSpec([1.0]), noise, 0.0005)


def test_covariance_examples(coarse_grid):
    q = QSpec([1.0, 1.0])
    est = covariance_estimate(q, 100_000, [1, 0], [1, 0], 1.0, 1.0, grid=coarse_grid, seed=1)
    assert abs(est - 1) <= 0.03
    ortho = covariance_estimate(q, 10_000, [1, 0], [0, 1], 1.0, 1.0, grid=coarse_grid, seed=1)
    assert abs(ortho) <= 3 / math.sqrt(10_000)
    assert q_pairing(q, [1, 0], [0, 1]) == 0
    g2 = TimeGrid.from_horizon(2.0, 0.01)
    cross = covariance_estimate(QSpec([1.0]), 100_000, [1], [1], 2.0, 1.0, grid=g2, seed=2)
    assert abs(cross - 1) <= 0.03
    with pytest.raises(ValueError):
        covariance_estimate(q, 0, [1, 0], [1, 0], 1.0, 1.0, grid=coarse_grid, seed=1)


def test_dump_roundtrip():
    g = TimeGrid(0.125, 7)
    noise = sample_cylindrical(g, 3, 5, 2)
    buf = io.BytesIO()
    dump_increments(noise, buf, path_index=1)
    raw = buf.getvalue()
    assert raw[:4] == b"CYLN" and len(raw) == 24 + 8 * 3 * 7
    back = load_increments(io.BytesIO(raw))
    assert back.grid == g
    assert np.array_equal(back.increments[0], noise.increments[1])
    # row-major (component, step), little endian
    assert np.frombuffer(raw[24:32], "<f8")[0] == noise.increments[1, 0, 0]
    assert np.frombuffer(raw[32:40], "<f8")[0] == noise.increments[1, 0, 1]
    with pytest.raises(ValueError):
        load_increments(io.BytesIO(b"XXXX" + raw[4:]))


def test_coarsen_keeps_path():
    g = TimeGrid(0.01, 100)
    noise = sample_cylindrical(g, 2, 3, 4)
    c = noise.coarsen(4)
    assert c.grid.steps == 25
    assert np.allclose(c.W()[:, :, -1], noise.W()[:, :, -1])
    assert np.allclose(c.W()[:, :, 5], noise.W()[:, :, 20])


def test_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(0.0, 10)
    with pytest.raises(OffGridError):
        TimeGrid.from_horizon(1.0, 0.3)
    with pytest.raises(ValueError):
        CylindricalNoise(TimeGrid(0.1, 5), np.zeros((1, 1, 4)))
