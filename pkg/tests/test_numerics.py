import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from isslstm.numerics import (
    DomainError,
    inf_norm_mat,
    inf_norm_vec,
    mat_exp,
    matrix_two_norm,
    sigmoid,
    sigmoid_deriv,
    tanh_act,
    tanh_deriv,
    two_norm_vec,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


@pytest.mark.parametrize("v, expected", [([1, -3, 2], 3.0), ([0, 0], 0.0), ([-0.5], 0.5)])
def test_inf_norm_vec_examples(v, expected):
    assert inf_norm_vec(v) == expected


@pytest.mark.parametrize("m, expected", [([[1, -2], [3, 0.5]], 3.5), (np.eye(3), 1.0), ([[0, 0], [0, 0]], 0.0)])
def test_inf_norm_mat_examples(m, expected):
    assert inf_norm_mat(m) == expected


@pytest.mark.parametrize("v, expected", [([3, 4], 5.0), ([1], 1.0), ([0, 0, 0], 0.0)])
def test_two_norm_vec_examples(v, expected):
    assert two_norm_vec(v) == expected


@pytest.mark.parametrize("fn", [inf_norm_vec, two_norm_vec])
def test_empty_vector_rejected(fn):
    with pytest.raises(DomainError):
        fn([])


def test_empty_matrix_and_nonfinite_rejected():
    with pytest.raises(DomainError):
        inf_norm_mat(np.zeros((0, 3)))
    with pytest.raises(DomainError):
        inf_norm_vec([1.0, np.nan])


@given(arrays(np.float64, st.integers(1, 30), elements=finite))
def test_norm_sandwich(v):
    n = v.size
    two = two_norm_vec(v)
    inf = inf_norm_vec(v)
    assert two / math.sqrt(n) <= inf * (1 + 1e-12) + 1e-300
    assert inf <= two * (1 + 1e-12) + 1e-300


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite))
def test_inf_norm_mat_matches_double_loop(m):
    best = 0.0
    for i in range(m.shape[0]):
        s = 0.0
        for j in range(m.shape[1]):
            s += abs(m[i, j])
        best = max(best, s)
    assert inf_norm_mat(m) == pytest.approx(best, rel=1e-15)


def test_activation_examples():
    assert sigmoid(0.0) == 0.5
    assert sigmoid(1.7) == pytest.approx(1.0 - sigmoid(-1.7), abs=1e-16)
    assert sigmoid_deriv(0.0) == 0.25
    assert tanh_act(0.0) == 0.0
    assert abs(tanh_act(0.5)) <= 0.5
    assert tanh_act(0.5) == pytest.approx(0.462117, abs=1e-6)
    # frozen value of the Maclaurin series of tanh at 0.5, summed to 30 terms
    assert tanh_act(0.5) == pytest.approx(0.46211715726000974, abs=1e-15)


@given(st.floats(-36.0, 36.0))
def test_sigmoid_open_range(x):
    # beyond |x| ~ 36.7 the exact value rounds to 1.0 in float64
    s = sigmoid(x)
    assert 0.0 < s < 1.0


@given(st.floats(-18.0, 18.0))
def test_tanh_open_range(x):
    assert -1.0 < tanh_act(x) < 1.0


def test_activations_never_leave_closed_range_at_extremes():
    for x in (-1e308, -745.0, 745.0, 1e308):
        assert 0.0 <= sigmoid(x) <= 1.0
        assert -1.0 <= tanh_act(x) <= 1.0


def test_activation_derivatives_match_central_differences():
    rng = np.random.default_rng(1)
    h = 1e-6
    for x in rng.uniform(-5, 5, 100):
        fd_s = (sigmoid(x + h) - sigmoid(x - h)) / (2 * h)
        fd_t = (tanh_act(x + h) - tanh_act(x - h)) / (2 * h)
        assert sigmoid_deriv(x) == pytest.approx(fd_s, rel=1e-7)
        assert tanh_deriv(x) == pytest.approx(fd_t, rel=1e-7)


def test_vectorized_activations():
    x = np.array([-2.0, 0.0, 3.0])
    np.testing.assert_allclose(sigmoid(x), 1 / (1 + np.exp(-x)), rtol=1e-15)
    np.testing.assert_allclose(tanh_act(x), np.tanh(x), rtol=1e-15)


def test_mat_exp_examples():
    np.testing.assert_array_equal(mat_exp(np.zeros((3, 3))), np.eye(3))
    e = mat_exp(np.diag([-1 / 30, -1 / 30]), 30.0)
    np.testing.assert_allclose(np.diag(e), [math.exp(-1)] * 2, atol=1e-9)
    assert e[0, 1] == 0.0


def test_mat_exp_inverse_property():
    rng = np.random.default_rng(7)
    for _ in range(20):
        A = rng.uniform(-1, 1, (4, 4))
        A /= max(1.0, inf_norm_mat(A))
        np.testing.assert_allclose(mat_exp(A) @ mat_exp(-A), np.eye(4), atol=1e-9)


def test_mat_exp_matches_scipy_up_to_norm_ten():
    rng = np.random.default_rng(3)
    for n in (2, 5, 14, 19):
        for target in (0.1, 1.0, 10.0):
            A = rng.normal(size=(n, n))
            A *= target / inf_norm_mat(A)
            ref = scipy.linalg.expm(A)
            got = mat_exp(A)
            assert np.max(np.abs(got - ref)) <= 1e-10 * np.max(np.abs(ref))


def test_mat_exp_rejects_non_square():
    with pytest.raises(DomainError):
        mat_exp(np.zeros((2, 3)))


def test_matrix_two_norm_matches_svd():
    rng = np.random.default_rng(11)
    for _ in range(20):
        M = rng.normal(size=(6, 6))
        assert matrix_two_norm(M) == pytest.approx(np.linalg.norm(M, 2), rel=1e-10)
    assert matrix_two_norm(np.zeros((3, 3))) == 0.0
