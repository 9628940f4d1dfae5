"""Backpropagation through time for the DB-LSTM heads, plus the update rule.

Gradients are taken of ``E = 1/2 sum (Out - y)^2`` for forecasting and of
``E = -log p_label`` for classification.  The upstream hidden gradient is
``Out - y`` so that subtracting ``eta * grad`` descends.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from dblstm import kernels
from dblstm.cell import (
    DbLstmWeights,
    ForwardTrace,
    StepCache,
    forward_classify,
    forward_forecast,
)
from dblstm.numerics import ShapeError, dsigmoid_from_output, dtanh_from_output


class Gradients(dict):
    """Name -> gradient array, keyed like ``weights.matrices()``."""

    @classmethod
    def zeros_like(cls, w) -> Gradients:
        return cls({k: np.zeros_like(v) for k, v in w.matrices().items()})

    def __add__(self, other: Gradients) -> Gradients:
        return Gradients({k: v + other[k] for k, v in self.items()})

    def scaled(self, s: float) -> Gradients:
        return Gradients({k: s * v for k, v in self.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.values()])


def mse_loss(out, target) -> float:
    out = np.asarray(out, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if out.shape != target.shape:
        raise ShapeError(f"output {out.shape} and target {target.shape} differ")
    return 0.5 * float(np.sum((target - out) ** 2))


def ce_loss(probs, label: int) -> float:
    probs = np.asarray(probs, dtype=np.float64).reshape(-1)
    if not 0 <= label < probs.size:
        raise IndexError(f"label {label} outside 0..{probs.size - 1}")
    return -math.log(probs[label])


def backward_step(step: StepCache, w: DbLstmWeights, dh_next, dc_next, dh_local):
    """Gradients of one time step.

    Returns ``(grads, dh_prev, dc_prev)``; ``grads`` covers the twelve cell
    matrices for this step only.
    """
    n = w.dims.n
    dh_next, dc_next, dh_local = (np.asarray(v, dtype=np.float64).reshape(-1)
                                  for v in (dh_next, dc_next, dh_local))
    for v in (dh_next, dc_next, dh_local):
        if v.size != n:
            raise ShapeError(f"upstream gradients must have length {n}")

    dh = dh_local + dh_next
    tc = np.tanh(step.c)
    do = dh * tc
    do_s = do * dsigmoid_from_output(step.o)

    # h = tanh(c) * o, and o itself reads c through C_o
    dc = dh * step.o * dtanh_from_output(tc) + w.C_o.T @ do_s
    dc = dc + dc_next

    df_s = dc * step.c_prev * dsigmoid_from_output(step.f)
    dg_s = dc * step.i * dtanh_from_output(step.g)
    di_s = dc * step.g * dsigmoid_from_output(step.i)

    dh_prev = w.R_f.T @ df_s + w.R_g.T @ dg_s + w.R_i.T @ di_s + w.R_o.T @ do_s
    dc_prev = dc * step.f + w.C_f.T @ df_s + w.C_g.T @ dg_s + w.C_i.T @ di_s

    ds = {"f": df_s, "g": dg_s, "i": di_s, "o": do_s}
    grads = Gradients()
    for q, d in ds.items():
        grads[f"W_{q}"] = np.outer(d, step.x)
    for q, d in ds.items():
        grads[f"R_{q}"] = np.outer(d, step.h_prev)
    for q in "fgi":
        grads[f"C_{q}"] = np.outer(ds[q], step.c_prev)
    grads["C_o"] = np.outer(do_s, step.c)
    return grads, dh_prev, dc_prev


def backward_sequence(trace: ForwardTrace, w: DbLstmWeights, dh_local) -> Gradients:
    """BPTT over the whole trace with per-step injected hidden gradients.

    ``dh_local`` is ``(k, n)``.  Gate-sum gradients are collected per step and
    the weight gradients summed over time with one product per weight group.
    """
    n = w.dims.n
    k = len(trace)
    dh_local = np.asarray(dh_local, dtype=np.float64)
    if dh_local.shape != (k, n):
        raise ShapeError(f"dh_local must be ({k}, {n}), got {dh_local.shape}")

    RT = np.vstack([w.R_f, w.R_g, w.R_i, w.R_o]).T  # (n, 4n)
    C3T = np.vstack([w.C_f, w.C_g, w.C_i]).T  # (n, 3n)
    CoT = w.C_o.T
    if kernels.ENABLED:
        ds = kernels.bptt(trace.acts, trace.c, dh_local, np.ascontiguousarray(RT),
                          np.ascontiguousarray(C3T), np.ascontiguousarray(CoT))
    else:
        ds = _gate_grads(trace, dh_local, RT, C3T, CoT)

    dW = ds.T @ trace.x
    dR = ds.T @ trace.h[:-1]
    dC3 = ds[:, :3 * n].T @ trace.c[:-1]
    dCo = ds[:, 3 * n:].T @ trace.c[1:]
    return _split_grads(n, dW, dR, dC3, dCo)


def _gate_grads(trace: ForwardTrace, dh_local, RT, C3T, CoT) -> np.ndarray:
    n = CoT.shape[0]
    k = len(trace)
    acts = trace.acts
    tanh_c = np.tanh(trace.c[1:])
    dsig = dsigmoid_from_output(acts)
    dtanh_g = dtanh_from_output(acts[:, n:2 * n])

    ds = np.zeros((k, 4 * n))
    dh_next = np.zeros(n)
    dc_next = np.zeros(n)
    for t in range(k - 1, -1, -1):
        f, g, i, o = acts[t, :n], acts[t, n:2 * n], acts[t, 2 * n:3 * n], acts[t, 3 * n:]
        dh = dh_local[t] + dh_next
        tc = tanh_c[t]
        do_s = dh * tc * dsig[t, 3 * n:]
        dc = dh * o * (1.0 - tc * tc) + CoT @ do_s + dc_next
        row = ds[t]
        row[:n] = dc * trace.c[t] * dsig[t, :n]
        row[n:2 * n] = dc * i * dtanh_g[t]
        row[2 * n:3 * n] = dc * g * dsig[t, 2 * n:3 * n]
        row[3 * n:] = do_s
        dh_next = RT @ row
        dc_next = dc * f + C3T @ row[:3 * n]
    return ds


def _split_grads(n, dW, dR, dC3, dCo) -> Gradients:
    grads = Gradients()
    for j, q in enumerate("fgio"):
        grads[f"W_{q}"] = dW[j * n:(j + 1) * n]
    for j, q in enumerate("fgio"):
        grads[f"R_{q}"] = dR[j * n:(j + 1) * n]
    for j, q in enumerate("fgi"):
        grads[f"C_{q}"] = dC3[j * n:(j + 1) * n]
    grads["C_o"] = dCo
    return grads


def backward_forecast(trace: ForwardTrace, targets, w: DbLstmWeights) -> tuple[Gradients, float]:
    """Accumulated gradients of the summed squared error over all ``k`` steps."""
    outputs = trace.h[1:]  # (k, n)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != outputs.T.shape:
        raise ShapeError(f"targets must be {outputs.T.shape} (n x k), got {targets.shape}")
    err = outputs - targets.T
    loss = 0.5 * float(np.sum(err * err))
    grads = backward_sequence(trace, w, err)
    if w.W_oh is not None:
        grads["W_oh"] = np.zeros_like(w.W_oh)
    return grads, loss


def softmax_output_grad(probs, label: int) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64).reshape(-1)
    if not 0 <= label < probs.size:
        raise IndexError(f"label {label} outside 0..{probs.size - 1}")
    d = probs.copy()
    d[label] -= 1.0
    return d


def backward_classify(trace: ForwardTrace, probs, label: int, w: DbLstmWeights) -> tuple[Gradients, float]:
    """Cross-entropy gradients; only the last step receives the FC gradient."""
    d_out = softmax_output_grad(probs, label)
    loss = ce_loss(probs, label)
    h_end = trace.h_end
    dh_local = np.zeros((len(trace), w.dims.n))
    dh_local[-1] = w.W_oh.T @ d_out
    grads = backward_sequence(trace, w, dh_local)
    # the FC input is h_end, so the outer product is with h_end
    grads["W_oh"] = np.outer(d_out, h_end)
    return grads, loss


def apply_update(w, g: Gradients, eta: float, weight_penalty: float = 0.0,
                 clip: float | None = None):
    """One gradient-descent step: ``W -= eta * (clip(g) + penalty * W)``.

    Works for any weight container exposing ``matrices``/``with_matrices``.
    The shared bias ``b`` is never touched.
    """
    new = {}
    for name, value in w.matrices().items():
        grad = g[name]
        if clip is not None and math.isfinite(clip):
            grad = np.clip(grad, -clip, clip)
        new[name] = value - eta * (grad + weight_penalty * value)
    return w.with_matrices(new)


def finite_diff_gradient(w, loss_fn: Callable[[object], float], epsilon: float = 1e-6) -> Gradients:
    """Central differences of ``loss_fn`` with respect to every weight entry.

    ``loss_fn`` receives a full weight container and must rerun the forward
    pass itself.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    base = w.matrices()
    grads = Gradients()
    for name, value in base.items():
        gmat = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            plus = value.copy()
            plus[idx] += epsilon
            minus = value.copy()
            minus[idx] -= epsilon
            lp = loss_fn(w.with_matrices({name: plus}))
            lm = loss_fn(w.with_matrices({name: minus}))
            gmat[idx] = (lp - lm) / (2.0 * epsilon)
        grads[name] = gmat
    return grads


def forecast_loss_fn(inputs, targets, forward=forward_forecast):
    """Closure ``w -> summed squared error`` for finite differencing."""
    def loss(w):
        out, _ = forward(w, inputs)
        return mse_loss(out, targets)
    return loss


def classify_loss_fn(inputs, label: int, forward=forward_classify):
    def loss(w):
        _, probs, _ = forward(w, inputs)
        return ce_loss(probs, label)
    return loss
