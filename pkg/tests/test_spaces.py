import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cylsde.spaces import (
    DimensionError, LinearOp, SpaceScale, embedding_constant, hs_norm, inner, norm, operator_norm,
)

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)


def chain_scales(dim):
    """Random scales with V >= H >= U >= X built from positive multiplicative gaps."""
    base = arrays(np.float64, dim, elements=st.floats(0.1, 10.0))
    gaps = arrays(np.float64, (3, dim), elements=st.floats(1.0, 5.0))
    return st.tuples(base, gaps).map(
        lambda bg: SpaceScale(dim, bg[0] * bg[1][0] * bg[1][1] * bg[1][2], bg[0] * bg[1][1] * bg[1][2],
                              bg[0] * bg[1][2], bg[0])
    )


def test_inner_examples():
    s = SpaceScale.uniform(2)
    assert inner(s, "H", [1, 0], [0, 1]) == 0
    assert inner(s, "H", [3, 4], [3, 4]) == 25
    w = SpaceScale.from_weights(V=[2, 1], H=[2, 1])
    assert inner(w, "H", [1, 1], [1, 1]) == 3


def test_norm_examples():
    s = SpaceScale.uniform(2)
    assert norm(s, "V", [0, 0]) == 0
    assert norm(s, "V", [3, 4]) == 5
    w = SpaceScale.from_weights(V=[4, 1], H=[1, 1])
    assert math.isclose(norm(w, "V", [1, 1]), math.sqrt(5))


def test_hs_norm_examples():
    s = SpaceScale.uniform(2)
    assert hs_norm(s, "H", np.array([[1.0], [0.0]])) == 1
    assert math.isclose(hs_norm(s, "H", np.eye(2)), math.sqrt(2))
    assert math.isclose(hs_norm(s, "H", np.array([[1.0, 2.0], [1.0, 0.0]])), math.sqrt(6))
    assert hs_norm(s, "H", np.zeros((2, 0))) == 0


def test_embedding_constant_examples():
    assert embedding_constant(SpaceScale.uniform(3), "V", "X") == 1
    s = SpaceScale.from_weights(V=[4, 4], H=[1, 1])
    assert embedding_constant(s, "V", "H") == 0.5
    s = SpaceScale.from_weights(H=[2, 8], U=[1, 2], V=[2, 8])
    assert math.isclose(embedding_constant(s, "H", "U"), math.sqrt(0.5))


def test_reversed_chain_rejected():
    with pytest.raises(ValueError):
        embedding_constant(SpaceScale.uniform(2), "X", "V")


def test_dimension_mismatch():
    s = SpaceScale.uniform(2)
    with pytest.raises(DimensionError):
        inner(s, "H", [1, 2, 3], [1, 2, 3])
    with pytest.raises(DimensionError):
        hs_norm(s, "H", np.ones((3, 2)))


def test_scale_invariants_enforced():
    with pytest.raises(ValueError):
        SpaceScale(2, [1, 1], [2, 2], [1, 1], [1, 1])
    with pytest.raises(ValueError):
        SpaceScale(2, [1, 1], [1, 1], [1, 1], [0, 1])
    with pytest.raises(ValueError):
        SpaceScale(0, [], [], [], [])
    with pytest.raises(DimensionError):
        SpaceScale(2, [1], [1], [1], [1])


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_cauchy_schwarz(data):
    dim = data.draw(st.integers(1, 6))
    scale = data.draw(chain_scales(dim))
    x = data.draw(arrays(np.float64, dim, elements=finite))
    y = data.draw(arrays(np.float64, dim, elements=finite))
    for space in ("V", "H", "U", "X"):
        lhs = abs(inner(scale, space, x, y))
        rhs = norm(scale, space, x) * norm(scale, space, y)
        assert lhs <= rhs * (1 + 1e-12) + 1e-300


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_embedding_bound_on_random_vectors(data):
    dim = data.draw(st.integers(1, 6))
    scale = data.draw(chain_scales(dim))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    xs = rng.normal(size=(1000, dim)) * 10.0 ** rng.uniform(-3, 3, size=(1000, 1))
    chain = ("V", "H", "U", "X")
    for i in range(4):
        for j in range(i, 4):
            c = embedding_constant(scale, chain[i], chain[j])
            assert c <= 1 + 1e-15
            assert np.all(norm(scale, chain[j], xs) <= c * norm(scale, chain[i], xs) * (1 + 1e-12))


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_hs_norm_permutation_invariant(data):
    dim = data.draw(st.integers(1, 5))
    K = data.draw(st.integers(1, 6))
    scale = data.draw(chain_scales(dim))
    B = data.draw(arrays(np.float64, (dim, K), elements=finite))
    perm = data.draw(st.permutations(range(K)))
    assert math.isclose(hs_norm(scale, "H", B), hs_norm(scale, "H", B[:, perm]), rel_tol=1e-12, abs_tol=1e-300)


def test_linear_op_certified_bound():
    s = SpaceScale.from_weights(V=[4.0, 1.0], H=[2.0, 1.0])
    m = np.array([[0.0, 1.0], [1.0, 0.0]])
    op = LinearOp(m, s, "H", "H", certified_bound=operator_norm(s, m) * 1.0001)
    assert np.allclose(op([1.0, 2.0]), [2.0, 1.0])
    with pytest.raises(ValueError):
        LinearOp(m, s, "H", "H", certified_bound=0.5 * operator_norm(s, m))


def test_operator_norm_matches_sampling():
    rng = np.random.default_rng(3)
    s = SpaceScale.from_weights(V=[5.0, 3.0, 2.0], H=[2.0, 1.0, 0.5])
    m = rng.normal(size=(3, 3))
    exact = operator_norm(s, m, "V", "H")
    xs = rng.normal(size=(5000, 3))
    ratios = norm(s, "H", xs @ m.T) / norm(s, "V", xs)
    assert ratios.max() <= exact * (1 + 1e-12)
    assert ratios.max() >= 0.95 * exact
