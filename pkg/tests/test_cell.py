import numpy as np
import pytest

from conftest import scalar_dblstm_run, scalar_dblstm_step, scalar_params
from dblstm.cell import (
    ConfigurationError,
    DbLstmWeights,
    ModelDims,
    StepState,
    forecast_batch,
    forward_classify,
    forward_forecast,
    init_weights,
    param_count,
    predict_proba,
    step_forward,
)
from dblstm.numerics import ShapeError


def zero_weights(m=1, n=1, num_classes=0):
    w = init_weights(ModelDims(m=m, n=n, num_classes=num_classes), seed=0)
    return w.with_matrices({k: np.zeros_like(v) for k, v in w.matrices().items()})


def test_param_count_published_sizes():
    assert param_count(ModelDims(m=1, n=1)) == 16
    assert param_count(ModelDims(m=1, n=32, num_classes=5)) == 8608


@pytest.mark.parametrize("m,n,c", [(1, 2, 0), (1, 1, 0), (3, 4, 2), (1, 32, 5)])
def test_param_count_matches_instance(m, n, c):
    dims = ModelDims(m=m, n=n, num_classes=c)
    assert init_weights(dims).n_params() == param_count(dims)


def test_param_count_n2():
    assert param_count(ModelDims(m=1, n=2)) == 48


def test_init_deterministic_and_in_range():
    dims = ModelDims(m=2, n=3, num_classes=4)
    a, b = init_weights(dims, seed=5), init_weights(dims, seed=5)
    for name, v in a.matrices().items():
        assert np.array_equal(v, b.matrices()[name])
        assert np.all(np.abs(v) <= 0.1)
    assert a.b == b.b and 0.0 <= a.b < 1.0
    other = init_weights(dims, seed=6)
    assert any(not np.array_equal(v, other.matrices()[k]) for k, v in a.matrices().items())


def test_init_bias_override_and_bad_scale():
    assert init_weights(ModelDims(), bias_value=0.25).b == 0.25
    with pytest.raises(ValueError):
        init_weights(ModelDims(), scale=0.0)


def test_weights_validate_shapes():
    w = init_weights(ModelDims(m=1, n=2))
    mats = w.matrices()
    mats["R_f"] = np.zeros((3, 3))
    with pytest.raises(ShapeError, match="R_f"):
        DbLstmWeights(dims=w.dims, b=w.b, **mats)


def test_zero_weights_step():
    w = zero_weights(n=3)
    cache, state = step_forward(w, [0.7], StepState.zeros(3))
    assert np.all(cache.f == 0.5) and np.all(cache.i == 0.5) and np.all(cache.o == 0.5)
    assert np.all(cache.g == 0) and np.all(state.c == 0) and np.all(state.h == 0)


def test_output_gate_reads_current_cell():
    w = zero_weights()
    w = w.with_matrices({"C_o": np.array([[1.0]])})
    cache, state = step_forward(w, [3.0], StepState.zeros(1))
    assert cache.c[0] == 0.0
    assert cache.o[0] == 0.5
    assert state.h[0] == 0.0


def test_step_matches_scalar_oracle():
    for seed in range(5):
        w = init_weights(ModelDims(), seed=seed, scale=0.8)
        p = scalar_params(w)
        prev = StepState(c=np.array([0.3]), h=np.array([-0.2]))
        _, state = step_forward(w, [0.45], prev)
        c, h = scalar_dblstm_step(p, 0.45, 0.3, -0.2)
        assert state.c[0] == pytest.approx(c, abs=1e-15)
        assert state.h[0] == pytest.approx(h, abs=1e-15)


def test_forecast_zero_weights_gives_zero(engine):
    w = zero_weights(n=2)
    out, _ = forward_forecast(w, np.linspace(-1, 1, 6)[None])
    assert out.shape == (2, 6) and np.all(out == 0)


def test_forecast_k1_equals_one_step(engine):
    w = init_weights(ModelDims(m=2, n=3), seed=2, scale=0.5)
    out, trace = forward_forecast(w, [[0.4], [-0.1]])
    _, state = step_forward(w, [0.4, -0.1], StepState.zeros(3))
    np.testing.assert_allclose(out[:, 0], state.h, atol=1e-15)
    np.testing.assert_allclose(trace.c[1], state.c, atol=1e-15)


def test_forecast_chain_matches_scalar_oracle(engine):
    w = init_weights(ModelDims(), seed=11, scale=0.9)
    xs = [0.2, -0.5, 0.9]
    out, _ = forward_forecast(w, [xs])
    np.testing.assert_allclose(out[0], scalar_dblstm_run(scalar_params(w), xs), atol=1e-15)


def test_trace_step_view_consistent(engine):
    w = init_weights(ModelDims(m=1, n=2), seed=3, scale=0.5)
    xs = np.array([[0.1, 0.2, 0.3, 0.4]])
    _, trace = forward_forecast(w, xs)
    prev = StepState.zeros(2)
    for t in range(4):
        cache, prev = step_forward(w, xs[:, t], prev)
        view = trace.step(t)
        for name in ("f", "g", "i", "o", "c", "h", "c_prev", "h_prev", "x"):
            np.testing.assert_allclose(getattr(view, name), getattr(cache, name), atol=1e-14)


def test_forecast_rejects_wrong_feature_count():
    w = init_weights(ModelDims(m=2, n=1))
    with pytest.raises(ShapeError):
        forward_forecast(w, np.zeros((1, 4)))


def test_classify_uniform_when_head_zero():
    w = init_weights(ModelDims(n=4, num_classes=5), seed=1)
    w = w.with_matrices({"W_oh": np.zeros((5, 4))})
    logits, probs, _ = forward_classify(w, np.ones((1, 7)))
    assert np.all(logits == 0)
    np.testing.assert_allclose(probs, 0.2, atol=1e-15)


def test_classify_matches_naive_softmax(rng):
    w = init_weights(ModelDims(n=3, num_classes=5), seed=4, scale=1.0)
    logits, probs, trace = forward_classify(w, rng.normal(size=(1, 9)))
    np.testing.assert_allclose(logits, w.W_oh @ trace.h_end, atol=1e-15)
    e = np.exp(logits)
    np.testing.assert_allclose(probs, e / e.sum(), atol=1e-14)


def test_classify_needs_head():
    with pytest.raises(ConfigurationError):
        forward_classify(init_weights(ModelDims(n=2)), np.zeros((1, 3)))


def test_batch_paths_match_single(engine, rng):
    w = init_weights(ModelDims(m=1, n=4, num_classes=3), seed=8, scale=0.5)
    batch = rng.normal(size=(6, 1, 10))
    probs = predict_proba(w, batch)
    outs = forecast_batch(w, batch)
    for j in range(6):
        _, p, _ = forward_classify(w, batch[j])
        o, _ = forward_forecast(w, batch[j])
        np.testing.assert_allclose(probs[j], p, atol=1e-13)
        np.testing.assert_allclose(outs[j], o, atol=1e-13)


def test_compiled_and_numpy_paths_agree(monkeypatch, rng):
    from dblstm import kernels
    w = init_weights(ModelDims(m=2, n=5, num_classes=3), seed=9, scale=0.7)
    x = rng.normal(size=(2, 40))
    monkeypatch.setattr(kernels, "ENABLED", False)
    _, p_ref, t_ref = forward_classify(w, x)
    monkeypatch.setattr(kernels, "ENABLED", True)
    _, p, t = forward_classify(w, x)
    np.testing.assert_allclose(t.h, t_ref.h, atol=1e-12)
    np.testing.assert_allclose(t.sums, t_ref.sums, atol=1e-12)
    np.testing.assert_allclose(p, p_ref, atol=1e-12)
