import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dblstm.cell import ModelDims, init_weights
from dblstm.quantize import derive_spec, quant_report, quantize_matrix, quantize_weights

EXAMPLE = np.array([[0.1, 0.9], [-0.5, 0.3]])


def test_derive_spec_example():
    spec = derive_spec(EXAMPLE, 2)
    assert spec.w_min == 0.1 and spec.w_max == 0.9
    assert spec.delta == pytest.approx(0.8 / 3, abs=1e-15)
    assert spec.n_states == 4


def test_derive_spec_degenerate_and_one_bit():
    assert derive_spec([[0.4, -0.4]], 3).delta == 0.0
    assert derive_spec(EXAMPLE, 1).delta == pytest.approx(0.8, abs=1e-15)
    with pytest.raises(ValueError):
        derive_spec(EXAMPLE, 0)


def test_example_with_tie_to_lower_state():
    q = quantize_matrix(EXAMPLE, derive_spec(EXAMPLE, 2))
    # 0.5 sits halfway between 0.3667 and 0.6333; the lower state wins
    np.testing.assert_allclose(q, [[0.1, 0.9], [-(0.1 + 0.8 / 3), 0.1 + 0.8 / 3]], atol=1e-15)


def test_ladder_points_are_fixed():
    spec = derive_spec(EXAMPLE, 2)
    states = spec.states()
    np.testing.assert_array_equal(quantize_matrix(states, spec), states)
    q = quantize_matrix(EXAMPLE, spec)
    np.testing.assert_array_equal(quantize_matrix(q, spec), q)


def test_one_bit_values():
    q = quantize_matrix(EXAMPLE, derive_spec(EXAMPLE, 1))
    assert set(np.abs(q).ravel().tolist()) <= {0.1, 0.9}


def test_high_resolution_is_nearly_lossless(rng):
    m = rng.normal(size=(20, 20))
    spec = derive_spec(m, 16)
    assert np.abs(quantize_matrix(m, spec) - m).max() <= spec.delta / 2 + 1e-15


def test_zero_maps_to_positive_floor():
    m = np.array([0.0, 0.2, -1.0])
    q = quantize_matrix(m, derive_spec(m, 2))
    assert q[0] == 0.0  # w_min is 0 here
    m2 = np.array([0.0, 0.0])
    assert quantize_matrix(m2, derive_spec(m2, 3)).tolist() == [0.0, 0.0]


def test_degenerate_spread_maps_to_signed_floor():
    m = np.array([0.3, -0.3, 0.3])
    np.testing.assert_array_equal(quantize_matrix(m, derive_spec(m, 4)), m)


def test_each_matrix_has_its_own_ladder():
    w = init_weights(ModelDims(n=3), seed=0)
    w = w.with_matrices({"W_f": w.W_f * 10})
    q = quantize_weights(w, 2)
    assert set(np.abs(q.W_f).ravel()) != set(np.abs(q.W_g).ravel())
    report = quant_report(w, 2)
    assert report["W_f"]["w_max"] == pytest.approx(np.abs(w.W_f).max())
    assert q.b == w.b


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(-5, 5, allow_nan=False)),
       st.integers(1, 8))
def test_quantizer_properties(m, bits):
    spec = derive_spec(m, bits)
    q = quantize_matrix(m, spec)
    a = np.abs(m)
    # error bound (a zero entry is lifted to w_min, which is also within bound)
    assert np.all(np.abs(np.abs(q) - a) <= spec.delta / 2 + 1e-12)
    np.testing.assert_array_equal(quantize_matrix(q, spec), q)
    assert len(np.unique(q)) <= 2 * 2 ** bits
    assert np.all(np.where(m < 0, q < 0, q > 0) | (q == 0))
    order = np.argsort(a, axis=None, kind="stable")
    assert np.all(np.diff(np.abs(q).ravel()[order]) >= 0)
