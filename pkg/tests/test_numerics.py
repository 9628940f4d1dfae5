import numpy as np
import pytest
from hypothesis import given, strategies as st

from dblstm.numerics import (
    ShapeError,
    dsigmoid_from_output,
    dtanh_from_output,
    hadamard,
    matmul,
    sigmoid,
    softmax,
    tanh_act,
)

# reference values evaluated at 30 digits with mpmath
SIG1 = 0.7310585786300049
TANH1 = 0.7615941559557649


def test_matmul_identity():
    assert np.array_equal(matmul(np.eye(2), [[3], [4]]), [[3], [4]])


def test_matmul_dot():
    assert matmul([[1, 2]], [[3], [4]]).tolist() == [[11.0]]


def test_matmul_matches_triple_loop(rng):
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    ref = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for t in range(4):
                ref[i, j] += a[i, t] * b[t, j]
    np.testing.assert_allclose(matmul(a, b), ref, rtol=1e-14)


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match="2x3 by 2x2"):
        matmul(np.ones((2, 3)), np.ones((2, 2)))


def test_hadamard_cases():
    assert hadamard([[1, 2]], [[0, 0]]).tolist() == [[0, 0]]
    assert hadamard([[2, 3]], [[1, 1]]).tolist() == [[2, 3]]
    assert hadamard([[2, 3]], [[4, 5]]).tolist() == [[8, 15]]
    with pytest.raises(ShapeError):
        hadamard([[1, 2]], [[1], [2]])


def test_sigmoid_values():
    assert sigmoid(0.0) == 0.5
    assert sigmoid(1.0) == pytest.approx(SIG1, abs=1e-15)


def test_sigmoid_saturates_without_warning():
    with np.errstate(all="raise"):
        v = sigmoid(-100.0)
        big = sigmoid(np.array([-1000.0, 1000.0]))
    assert 0 < v < 1e-40
    assert big.tolist() == [0.0, 1.0]


def test_tanh_values():
    assert tanh_act(0.0) == 0.0
    assert tanh_act(1.0) == pytest.approx(TANH1, abs=1e-15)


@given(st.floats(-30, 30))
def test_tanh_odd(x):
    assert tanh_act(-x) == -tanh_act(x)


def test_activation_slopes():
    assert dsigmoid_from_output(0.5) == 0.25
    assert dsigmoid_from_output(0.0) == 0.0
    assert dsigmoid_from_output(1.0) == 0.0
    assert dsigmoid_from_output(SIG1) == pytest.approx(0.19661193324148185, abs=1e-12)
    assert dtanh_from_output(0.0) == 1.0
    assert dtanh_from_output(1.0) == 0.0
    assert dtanh_from_output(-1.0) == 0.0
    assert dtanh_from_output(TANH1) == pytest.approx(0.41997434161402614, abs=1e-12)


def test_slopes_match_central_difference():
    h = 1e-6
    fd_sig = (sigmoid(1 + h) - sigmoid(1 - h)) / (2 * h)
    fd_tanh = (tanh_act(1 + h) - tanh_act(1 - h)) / (2 * h)
    assert dsigmoid_from_output(sigmoid(1.0)) == pytest.approx(fd_sig, rel=1e-8)
    assert dtanh_from_output(tanh_act(1.0)) == pytest.approx(fd_tanh, rel=1e-8)


def test_softmax_known_and_shift_invariant():
    p = softmax([1.0, 2.0, 3.0])
    np.testing.assert_allclose(p, [0.09003057317038046, 0.24472847105479764, 0.6652409557748219],
                               rtol=1e-14)
    np.testing.assert_allclose(softmax(np.array([1.0, 2.0, 3.0]) + 500.0), p, atol=1e-12)


def test_softmax_huge_logits_finite():
    p = softmax([1000.0, 0.0])
    assert np.all(np.isfinite(p)) and p[0] == 1.0
