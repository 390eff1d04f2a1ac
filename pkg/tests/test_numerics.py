import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sageopt.errors import DimensionError, InvalidValueError
from sageopt.numerics import col_abs_mean, elementwise, make_rng, matmul, rms, scale, sign

from oracles import matmul_loops

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def test_sign_examples():
    assert sign([[-2, 0, 5]]).tolist() == [[-1, 0, 1]]
    assert sign([[0, 0], [0, 0]]).tolist() == [[0, 0], [0, 0]]
    assert sign([[1e-300]]).tolist() == [[1]]


def test_sign_rejects_non_finite():
    with pytest.raises(InvalidValueError):
        sign([[np.nan]])
    with pytest.raises(InvalidValueError):
        sign([np.inf, 1.0])


@given(arrays(np.float64, (3, 4), elements=finite))
def test_sign_is_odd(x):
    assert np.array_equal(sign(-x), -sign(x))


@pytest.mark.parametrize(
    "g, expected",
    [([[1, -1], [3, -3]], [2, 2]), ([[0, 0]], [0, 0]), ([[1, 2], [3, 4]], [2, 3])],
)
def test_col_abs_mean_examples(g, expected):
    assert col_abs_mean(np.array(g, float)).tolist() == expected


def test_col_abs_mean_empty():
    with pytest.raises(DimensionError):
        col_abs_mean(np.zeros((0, 3)))


@given(arrays(np.float64, (5, 3), elements=finite), st.randoms())
def test_col_abs_mean_abs_and_permutation(g, rnd):
    perm = list(range(5))
    rnd.shuffle(perm)
    base = col_abs_mean(g)
    assert np.array_equal(base, col_abs_mean(np.abs(g)))
    np.testing.assert_allclose(col_abs_mean(g[perm]), base, rtol=1e-15, atol=0)
    assert np.all(base >= 0)


def test_rms_examples():
    assert rms(np.array([1.0, 1.0, 1.0])) == 1.0
    assert rms(np.array([0.0])) == 0.0
    assert rms(np.array([3.0, 4.0])) == pytest.approx(12.5**0.5, rel=1e-15)


def test_rms_extreme_magnitudes():
    assert rms(np.array([1e200, 1e200])) == pytest.approx(1e200)
    assert rms(np.array([1e-200, 1e-200])) == pytest.approx(1e-200)


def test_rms_empty():
    with pytest.raises(DimensionError):
        rms(np.array([]))


@given(arrays(np.float64, 6, elements=finite), st.floats(-1e3, 1e3, allow_nan=False))
def test_rms_homogeneous(v, c):
    assert rms(c * v) == pytest.approx(abs(c) * rms(v), rel=1e-12, abs=1e-300)


def test_matmul_elementwise_scale_examples():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(np.eye(2), a), a)
    assert elementwise(np.array([[1.0, 2.0]]), np.array([[3.0, 4.0]]), np.multiply).tolist() == [[3, 8]]
    assert scale(np.array([[1.0, -1.0]]), 0).tolist() == [[0, 0]]


def test_shape_mismatch():
    with pytest.raises(DimensionError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(DimensionError):
        elementwise(np.ones((2, 3)), np.ones((3, 2)), np.add)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_matmul_associativity_matches_loops(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.integers(-9, 10, size=s).astype(float) for s in [(3, 4), (4, 2), (2, 5)])
    left = matmul(matmul(a, b), c)
    right = matmul(a, matmul(b, c))
    oracle = matmul_loops(matmul_loops(a.tolist(), b.tolist()), c.tolist())
    assert np.array_equal(left, right)
    assert left.tolist() == oracle


def test_reductions_are_repeatable():
    v = make_rng(7).normal(size=1001)
    g = make_rng(8).normal(size=(300, 17))
    assert rms(v) == rms(v.copy())
    assert np.array_equal(col_abs_mean(g), col_abs_mean(g.copy()))


def test_rng_is_seeded():
    assert np.array_equal(make_rng(3).random(5), make_rng(3).random(5))
    assert not np.array_equal(make_rng(3).random(5), make_rng(4).random(5))
