import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from soae.tensor import DimensionError, NonFiniteError, as_tensor, axpy, dot, flatten, l2_norm

finite = st.floats(-1e3, 1e3, allow_nan=False)
vectors = st.integers(1, 40).flatmap(lambda n: st.tuples(arrays(np.float64, n, elements=finite),
                                                         arrays(np.float64, n, elements=finite)))


def test_dot_hand_values():
    assert dot([1, 2, 3], [4, 5, 6]) == 32
    assert dot(np.arange(7.0), np.zeros(7)) == 0


def test_dot_matches_naive_loop():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=50), rng.normal(size=50)
    naive = math.fsum(float(x) * float(y) for x, y in zip(a, b))
    assert dot(a, b) == pytest.approx(naive, rel=1e-12)


def test_l2_norm_values():
    assert l2_norm([3, 4]) == 5
    assert l2_norm(np.zeros(6)) == 0
    v = np.random.default_rng(1).normal(size=100)
    assert l2_norm(v) == pytest.approx(math.sqrt(math.fsum(x * x for x in v)), rel=1e-12)


def test_axpy_values():
    x, y = np.array([1.0, -2.0]), np.array([5.0, 7.0])
    np.testing.assert_array_equal(axpy(0, x, y), y)
    np.testing.assert_array_equal(axpy(1, x, np.zeros(2)), x)
    np.testing.assert_array_equal(axpy(-2, [1, 1], [3, 3]), [1, 1])


def test_shape_mismatch_raises():
    with pytest.raises(DimensionError):
        dot([1, 2], [1, 2, 3])
    with pytest.raises(DimensionError):
        axpy(1.0, np.ones(3), np.ones(4))


def test_non_finite_rejected():
    with pytest.raises(NonFiniteError):
        as_tensor([1.0, np.nan])
    with pytest.raises(NonFiniteError):
        dot([np.inf], [1.0])


def test_as_tensor_shape_and_row_major_flatten():
    img = as_tensor(np.arange(6.0), shape=(2, 3))
    assert img.shape == (2, 3) and img.dtype == np.float64
    np.testing.assert_array_equal(flatten(img), np.arange(6.0))
    with pytest.raises(DimensionError):
        as_tensor(np.arange(5.0), shape=(2, 3))


@given(vectors)
def test_dot_symmetric(pair):
    a, b = pair
    assert dot(a, b) == pytest.approx(dot(b, a), rel=1e-12, abs=1e-300)


@given(vectors)
def test_cauchy_schwarz(pair):
    a, b = pair
    assert abs(dot(a, b)) <= l2_norm(a) * l2_norm(b) * (1 + 1e-12) + 1e-300


@given(arrays(np.float64, st.integers(1, 30), elements=finite), finite, finite)
def test_axpy_distributes(x, s, t):
    lhs = axpy(s, x, axpy(t, x, np.zeros_like(x)))
    np.testing.assert_allclose(lhs, (s + t) * x, rtol=1e-12, atol=1e-9)
