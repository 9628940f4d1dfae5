"""Conventional LSTM used as the comparison baseline.

No cell-state connections into the gates, one learned bias vector per gate::

    f = sigmoid(W_f x + R_f h_prev + b_f)      (likewise g with tanh, i, o)
    c = f * c_prev + i * g
    h = o * tanh(c)

Heads and trace layout mirror :mod:`dblstm.cell`, so the trainer can drive
either model through the same calls.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from dblstm.backprop import Gradients, ce_loss, softmax_output_grad
from dblstm.cell import ConfigurationError, ForwardTrace, GATES, ModelDims
from dblstm.numerics import ShapeError, sigmoid, softmax


def param_count(dims: ModelDims) -> int:
    m, n = dims.m, dims.n
    return 4 * n * m + 4 * n * n + 4 * n + dims.num_classes * n


@dataclass
class LstmWeights:
    dims: ModelDims
    W_f: np.ndarray
    W_g: np.ndarray
    W_i: np.ndarray
    W_o: np.ndarray
    R_f: np.ndarray
    R_g: np.ndarray
    R_i: np.ndarray
    R_o: np.ndarray
    b_f: np.ndarray
    b_g: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    W_oh: np.ndarray | None = None
    seed: int | None = None

    cell_type = "lstm"
    MATRIX_NAMES = (
        "W_f", "W_g", "W_i", "W_o",
        "R_f", "R_g", "R_i", "R_o",
        "b_f", "b_g", "b_i", "b_o",
        "W_oh",
    )

    def __post_init__(self):
        n, m, nc = self.dims.n, self.dims.m, self.dims.num_classes
        expected = {f"W_{q}": (n, m) for q in GATES}
        expected.update({f"R_{q}": (n, n) for q in GATES})
        expected.update({f"b_{q}": (n, 1) for q in GATES})
        if nc > 0:
            expected["W_oh"] = (nc, n)
        elif self.W_oh is not None:
            raise ShapeError("W_oh given but dims.num_classes == 0")
        for name, shape in expected.items():
            value = getattr(self, name)
            if value is None:
                raise ConfigurationError(f"missing weight matrix {name}")
            value = np.asarray(value, dtype=np.float64)
            if name.startswith("b_") and value.ndim == 1:
                value = value.reshape(-1, 1)
            if value.shape != shape:
                raise ShapeError(f"{name} should be {shape}, got {value.shape}")
            setattr(self, name, value)

    def matrices(self) -> dict[str, np.ndarray]:
        return {
            name: getattr(self, name)
            for name in self.MATRIX_NAMES
            if getattr(self, name) is not None
        }

    def with_matrices(self, mats: dict[str, np.ndarray]) -> LstmWeights:
        return dataclasses.replace(self, **mats)

    def copy(self) -> LstmWeights:
        return self.with_matrices({k: v.copy() for k, v in self.matrices().items()})

    def n_params(self) -> int:
        return sum(v.size for v in self.matrices().values())


def init_weights(dims: ModelDims, seed: int = 0, scale: float = 0.1,
                 bias_value: float | None = None) -> LstmWeights:
    """Same U(-scale, scale) scheme as the DB-LSTM; ``bias_value`` is unused."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    rng = np.random.default_rng(seed)
    n, m = dims.n, dims.m
    mats = {}
    for name in LstmWeights.MATRIX_NAMES:
        if name == "W_oh":
            if dims.num_classes == 0:
                continue
            shape = (dims.num_classes, n)
        elif name.startswith("W_"):
            shape = (n, m)
        elif name.startswith("R_"):
            shape = (n, n)
        else:
            shape = (n, 1)
        mats[name] = rng.uniform(-scale, scale, size=shape)
    return LstmWeights(dims=dims, seed=seed, **mats)


def _as_batch(w: LstmWeights, inputs) -> np.ndarray:
    X = np.asarray(inputs, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1] != w.dims.m or X.shape[2] < 1:
        raise ShapeError(f"inputs must be m x k with m={w.dims.m}, got shape {np.shape(inputs)}")
    return X.transpose(2, 0, 1).copy()  # (k, B, m)


def _recur(w: LstmWeights, xs: np.ndarray):
    n = w.dims.n
    k, B, _ = xs.shape
    W = np.vstack([w.W_f, w.W_g, w.W_i, w.W_o])
    RT = np.vstack([w.R_f, w.R_g, w.R_i, w.R_o]).T
    bias = np.concatenate([w.b_f, w.b_g, w.b_i, w.b_o]).ravel()
    pre = xs @ W.T + bias
    sums = np.empty((k, B, 4 * n))
    acts = np.empty((k, B, 4 * n))
    c = np.zeros((k + 1, B, n))
    h = np.zeros((k + 1, B, n))
    for t in range(k):
        s = pre[t] + h[t] @ RT
        a = acts[t]
        a[:] = sigmoid(s)
        a[:, n:2 * n] = np.tanh(s[:, n:2 * n])
        c[t + 1] = a[:, :n] * c[t] + a[:, 2 * n:3 * n] * a[:, n:2 * n]
        h[t + 1] = a[:, 3 * n:] * np.tanh(c[t + 1])
        sums[t] = s
    return sums, acts, c, h


def _single(w: LstmWeights, inputs) -> ForwardTrace:
    xs = _as_batch(w, inputs)
    if xs.shape[1] != 1:
        raise ShapeError("expected a single m x k sequence")
    sums, acts, c, h = _recur(w, xs)
    return ForwardTrace(x=xs[:, 0], sums=sums[:, 0], acts=acts[:, 0],
                        c=c[:, 0], h=h[:, 0], cell_type="lstm")


def forward_forecast(w: LstmWeights, inputs):
    trace = _single(w, inputs)
    return trace.h[1:].T.copy(), trace


def forward_classify(w: LstmWeights, inputs):
    if w.W_oh is None or w.dims.num_classes < 2:
        raise ConfigurationError("classification needs W_oh with at least 2 classes")
    trace = _single(w, inputs)
    logits = w.W_oh @ trace.h_end
    return logits, softmax(logits), trace


def lstm_forward(w: LstmWeights, inputs, head: str = "forecast"):
    """Head-dispatching entry point: ``"forecast"`` or ``"classify"``."""
    if head == "forecast":
        return forward_forecast(w, inputs)
    if head == "classify":
        return forward_classify(w, inputs)
    raise ValueError(f"unknown head {head!r}")


def predict_proba(w: LstmWeights, batch) -> np.ndarray:
    if w.W_oh is None:
        raise ConfigurationError("classification needs W_oh")
    _, _, _, h = _recur(w, _as_batch(w, batch))
    logits = h[-1] @ w.W_oh.T
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def forecast_batch(w: LstmWeights, batch) -> np.ndarray:
    _, _, _, h = _recur(w, _as_batch(w, batch))
    return h[1:].transpose(1, 2, 0).copy()


def backward_sequence(trace: ForwardTrace, w: LstmWeights, dh_local) -> Gradients:
    n = w.dims.n
    k = len(trace)
    dh_local = np.asarray(dh_local, dtype=np.float64)
    if dh_local.shape != (k, n):
        raise ShapeError(f"dh_local must be ({k}, {n}), got {dh_local.shape}")
    R = np.vstack([w.R_f, w.R_g, w.R_i, w.R_o])
    acts = trace.acts
    tanh_c = np.tanh(trace.c[1:])
    ds = np.zeros((k, 4 * n))
    dh_next = np.zeros(n)
    dc_next = np.zeros(n)
    for t in range(k - 1, -1, -1):
        f, g, i, o = acts[t, :n], acts[t, n:2 * n], acts[t, 2 * n:3 * n], acts[t, 3 * n:]
        dh = dh_local[t] + dh_next
        tc = tanh_c[t]
        dc = dh * o * (1.0 - tc * tc) + dc_next
        row = ds[t]
        row[:n] = dc * trace.c[t] * f * (1.0 - f)
        row[n:2 * n] = dc * i * (1.0 - g * g)
        row[2 * n:3 * n] = dc * g * i * (1.0 - i)
        row[3 * n:] = dh * tc * o * (1.0 - o)
        dh_next = row @ R
        dc_next = dc * f
    dW = ds.T @ trace.x
    dR = ds.T @ trace.h[:-1]
    db = ds.sum(axis=0)
    grads = Gradients()
    for j, q in enumerate(GATES):
        grads[f"W_{q}"] = dW[j * n:(j + 1) * n]
    for j, q in enumerate(GATES):
        grads[f"R_{q}"] = dR[j * n:(j + 1) * n]
    for j, q in enumerate(GATES):
        grads[f"b_{q}"] = db[j * n:(j + 1) * n].reshape(-1, 1)
    return grads


def backward_forecast(trace: ForwardTrace, targets, w: LstmWeights):
    outputs = trace.h[1:]
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != outputs.T.shape:
        raise ShapeError(f"targets must be {outputs.T.shape} (n x k), got {targets.shape}")
    err = outputs - targets.T
    grads = backward_sequence(trace, w, err)
    if w.W_oh is not None:
        grads["W_oh"] = np.zeros_like(w.W_oh)
    return grads, 0.5 * float(np.sum(err * err))


def backward_classify(trace: ForwardTrace, probs, label: int, w: LstmWeights):
    d_out = softmax_output_grad(probs, label)
    dh_local = np.zeros((len(trace), w.dims.n))
    dh_local[-1] = w.W_oh.T @ d_out
    grads = backward_sequence(trace, w, dh_local)
    grads["W_oh"] = np.outer(d_out, trace.h_end)
    return grads, ce_loss(probs, label)


def lstm_backward(trace: ForwardTrace, target, w: LstmWeights, probs=None):
    """Forecast gradients when ``probs`` is None, classification otherwise.

    For classification ``target`` is the integer label.
    """
    if probs is None:
        return backward_forecast(trace, target, w)
    return backward_classify(trace, probs, int(target), w)
