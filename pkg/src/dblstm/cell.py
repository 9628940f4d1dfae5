"""Dynamically-biased LSTM cell: parameters and forward passes.

Every gate sees the input with a shared scalar bias appended (``[x, b]``),
the previous hidden state, and a cell state.  The forget, generate and input
gates read ``c_{t-1}``; the output gate reads the freshly updated ``c_t``::

    f = sigmoid(W_f [x b] + R_f h_prev + C_f c_prev)
    g = tanh   (W_g [x b] + R_g h_prev + C_g c_prev)
    i = sigmoid(W_i [x b] + R_i h_prev + C_i c_prev)
    c = f * c_prev + g * i
    o = sigmoid(W_o [x b] + R_o h_prev + C_o c)
    h = tanh(c) * o

Sequences are laid out as ``(features, time)`` matrices, i.e. ``m x k``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from dblstm import kernels
from dblstm.numerics import (
    ShapeError,
    as_matrix,
    hadamard,
    matmul,
    sigmoid,
    softmax,
    tanh_act,
)

GATES = ("f", "g", "i", "o")


class ConfigurationError(ValueError):
    """The model lacks a component the requested operation needs."""


@dataclass(frozen=True)
class ModelDims:
    m: int = 1
    n: int = 1
    k: int = 1
    num_classes: int = 0

    def __post_init__(self):
        if self.m < 1 or self.n < 1 or self.k < 1:
            raise ValueError(f"m, n, k must be positive, got {self}")
        if self.num_classes < 0:
            raise ValueError("num_classes must be >= 0")


def param_count(dims: ModelDims) -> int:
    """Trainable scalars: four input matrices (bias column included), R, C, FC.

    The shared bias ``b`` itself is not trained and is not counted.
    """
    m, n = dims.m, dims.n
    return 4 * n * (m + 1) + 8 * n * n + dims.num_classes * n


@dataclass
class DbLstmWeights:
    dims: ModelDims
    W_f: np.ndarray
    W_g: np.ndarray
    W_i: np.ndarray
    W_o: np.ndarray
    R_f: np.ndarray
    R_g: np.ndarray
    R_i: np.ndarray
    R_o: np.ndarray
    C_f: np.ndarray
    C_g: np.ndarray
    C_i: np.ndarray
    C_o: np.ndarray
    b: float
    W_oh: np.ndarray | None = None
    seed: int | None = None

    cell_type = "dblstm"
    MATRIX_NAMES = (
        "W_f", "W_g", "W_i", "W_o",
        "R_f", "R_g", "R_i", "R_o",
        "C_f", "C_g", "C_i", "C_o",
        "W_oh",
    )

    def __post_init__(self):
        n, m, nc = self.dims.n, self.dims.m, self.dims.num_classes
        expected = {f"W_{q}": (n, m + 1) for q in GATES}
        expected.update({f"R_{q}": (n, n) for q in GATES})
        expected.update({f"C_{q}": (n, n) for q in GATES})
        if nc > 0:
            expected["W_oh"] = (nc, n)
        elif self.W_oh is not None:
            raise ShapeError("W_oh given but dims.num_classes == 0")
        for name, shape in expected.items():
            value = getattr(self, name)
            if value is None:
                raise ConfigurationError(f"missing weight matrix {name}")
            value = np.asarray(value, dtype=np.float64)
            if value.shape != shape:
                raise ShapeError(f"{name} should be {shape}, got {value.shape}")
            setattr(self, name, value)
        self.b = float(self.b)

    def matrices(self) -> dict[str, np.ndarray]:
        """Trainable matrices in canonical order (W_oh only when present)."""
        return {
            name: getattr(self, name)
            for name in self.MATRIX_NAMES
            if getattr(self, name) is not None
        }

    def with_matrices(self, mats: dict[str, np.ndarray]) -> DbLstmWeights:
        return dataclasses.replace(self, **mats)

    def copy(self) -> DbLstmWeights:
        return self.with_matrices({k: v.copy() for k, v in self.matrices().items()})

    def n_params(self) -> int:
        return sum(v.size for v in self.matrices().values())


def init_weights(dims: ModelDims, seed: int = 0, scale: float = 0.1,
                 bias_value: float | None = None) -> DbLstmWeights:
    """Uniform(-scale, scale) weights; the shared bias is drawn from U(0, 1)."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    rng = np.random.default_rng(seed)
    n, m = dims.n, dims.m
    mats = {}
    for name in DbLstmWeights.MATRIX_NAMES:
        if name == "W_oh":
            if dims.num_classes == 0:
                continue
            shape = (dims.num_classes, n)
        elif name.startswith("W_"):
            shape = (n, m + 1)
        else:
            shape = (n, n)
        mats[name] = rng.uniform(-scale, scale, size=shape)
    b = rng.uniform(0.0, 1.0)
    if bias_value is not None:
        b = float(bias_value)
    return DbLstmWeights(dims=dims, b=b, seed=seed, **mats)


@dataclass
class StepState:
    c: np.ndarray
    h: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> StepState:
        return cls(c=np.zeros(n), h=np.zeros(n))


@dataclass
class StepCache:
    """What one time step leaves behind for the backward pass."""

    x: np.ndarray  # input with bias appended, length m + 1
    f_s: np.ndarray
    g_s: np.ndarray
    i_s: np.ndarray
    o_s: np.ndarray
    f: np.ndarray
    g: np.ndarray
    i: np.ndarray
    o: np.ndarray
    c_prev: np.ndarray
    h_prev: np.ndarray
    c: np.ndarray
    h: np.ndarray


@dataclass
class ForwardTrace:
    """Whole-sequence cache, stored as arrays indexed by time.

    ``sums`` and ``acts`` hold the four gates side by side (f, g, i, o), each
    ``n`` wide.  ``c`` and ``h`` have ``k + 1`` rows; row 0 is the initial state.
    """

    x: np.ndarray  # (k, m + 1)
    sums: np.ndarray  # (k, 4n)
    acts: np.ndarray  # (k, 4n)
    c: np.ndarray  # (k + 1, n)
    h: np.ndarray  # (k + 1, n)
    cell_type: str = "dblstm"
    extras: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.c.shape[1]

    def step(self, t: int) -> StepCache:
        """Cache for 0-based step ``t``."""
        n = self.n
        s, a = self.sums[t], self.acts[t]
        return StepCache(
            x=self.x[t],
            f_s=s[:n], g_s=s[n:2 * n], i_s=s[2 * n:3 * n], o_s=s[3 * n:],
            f=a[:n], g=a[n:2 * n], i=a[2 * n:3 * n], o=a[3 * n:],
            c_prev=self.c[t], h_prev=self.h[t], c=self.c[t + 1], h=self.h[t + 1],
        )

    @property
    def h_end(self) -> np.ndarray:
        return self.h[-1]


def _column(v) -> np.ndarray:
    return np.asarray(v, dtype=np.float64).reshape(-1, 1)


def step_forward(w: DbLstmWeights, x, prev: StepState) -> tuple[StepCache, StepState]:
    """One time step, written gate by gate."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != w.dims.m:
        raise ShapeError(f"input has {x.size} features, model expects {w.dims.m}")
    xb = _column(np.append(x, w.b))
    h_prev = _column(prev.h)
    c_prev = _column(prev.c)

    def gate_sum(q, cell):
        return (matmul(getattr(w, f"W_{q}"), xb)
                + matmul(getattr(w, f"R_{q}"), h_prev)
                + matmul(getattr(w, f"C_{q}"), cell))

    f_s = gate_sum("f", c_prev)
    g_s = gate_sum("g", c_prev)
    i_s = gate_sum("i", c_prev)
    f, g, i = sigmoid(f_s), tanh_act(g_s), sigmoid(i_s)
    c = hadamard(f, c_prev) + hadamard(g, i)
    o_s = gate_sum("o", c)
    o = sigmoid(o_s)
    h = hadamard(tanh_act(c), o)

    flat = [v.reshape(-1) for v in (xb, f_s, g_s, i_s, o_s, f, g, i, o, c_prev, h_prev, c, h)]
    cache = StepCache(*flat)
    return cache, StepState(c=cache.c.copy(), h=cache.h.copy())


class _Packed:
    """Gate matrices stacked for the sequence loop."""

    def __init__(self, w: DbLstmWeights):
        self.n = w.dims.n
        self.W = np.vstack([w.W_f, w.W_g, w.W_i, w.W_o])  # (4n, m+1)
        self.R = np.vstack([w.R_f, w.R_g, w.R_i, w.R_o])  # (4n, n)
        self.C3 = np.vstack([w.C_f, w.C_g, w.C_i])  # (3n, n)
        self.C_o = w.C_o


def _augment(w: DbLstmWeights, inputs) -> np.ndarray:
    """``(m, k)`` or ``(B, m, k)`` inputs -> time-major ``(k, B, m+1)`` with bias."""
    X = np.asarray(inputs, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1] != w.dims.m:
        raise ShapeError(f"inputs must be m x k with m={w.dims.m}, got shape {np.shape(inputs)}")
    if X.shape[2] < 1:
        raise ShapeError("sequence must have at least one step")
    B, _, k = X.shape
    xb = np.empty((k, B, w.dims.m + 1))
    xb[:, :, :-1] = X.transpose(2, 0, 1)
    xb[:, :, -1] = w.b
    return xb


def _recur(w: DbLstmWeights, xb: np.ndarray):
    """Run the recurrence on a time-major batch; returns batched trace arrays."""
    p = _Packed(w)
    n = p.n
    k, B, _ = xb.shape
    if B == 1 and kernels.ENABLED:
        x1 = np.ascontiguousarray(xb[:, 0])
        out = kernels.recur(p.W, p.R, np.ascontiguousarray(p.C3), p.C_o, x1)
        return tuple(a[:, None] for a in out)
    pre = xb @ p.W.T  # (k, B, 4n): input contributions for every step at once
    sums = np.empty((k, B, 4 * n))
    acts = np.empty((k, B, 4 * n))
    c = np.zeros((k + 1, B, n))
    h = np.zeros((k + 1, B, n))
    R3T, RoT = p.R[:3 * n].T, p.R[3 * n:].T
    C3T, CoT = p.C3.T, p.C_o.T
    for t in range(k):
        s3 = pre[t, :, :3 * n] + h[t] @ R3T + c[t] @ C3T
        a3 = acts[t, :, :3 * n]
        a3[:, :n] = sigmoid(s3[:, :n])
        a3[:, n:2 * n] = np.tanh(s3[:, n:2 * n])
        a3[:, 2 * n:] = sigmoid(s3[:, 2 * n:])
        c[t + 1] = a3[:, :n] * c[t] + a3[:, n:2 * n] * a3[:, 2 * n:]
        so = pre[t, :, 3 * n:] + h[t] @ RoT + c[t + 1] @ CoT
        o = sigmoid(so)
        h[t + 1] = np.tanh(c[t + 1]) * o
        sums[t, :, :3 * n] = s3
        sums[t, :, 3 * n:] = so
        acts[t, :, 3 * n:] = o
    return sums, acts, c, h


def _trace_from_batch(xb, sums, acts, c, h, j=0) -> ForwardTrace:
    return ForwardTrace(x=xb[:, j], sums=sums[:, j], acts=acts[:, j], c=c[:, j], h=h[:, j])


def forward_forecast(w: DbLstmWeights, inputs) -> tuple[np.ndarray, ForwardTrace]:
    """Run the cell over an ``m x k`` sequence; the output at each step is ``h_t``.

    Returns outputs as an ``n x k`` matrix together with the trace.
    """
    xb = _augment(w, inputs)
    if xb.shape[1] != 1:
        raise ShapeError("forward_forecast takes a single m x k sequence")
    trace = _trace_from_batch(xb, *_recur(w, xb))
    return trace.h[1:].T.copy(), trace


def classify_logits(w: DbLstmWeights, h_end) -> np.ndarray:
    if w.W_oh is None:
        raise ConfigurationError("classification needs W_oh (dims.num_classes > 0)")
    return w.W_oh @ h_end


def forward_classify(w: DbLstmWeights, inputs) -> tuple[np.ndarray, np.ndarray, ForwardTrace]:
    """Recurrence over the window, then FC on the last hidden state and softmax."""
    if w.W_oh is None or w.dims.num_classes < 2:
        raise ConfigurationError("classification needs W_oh with at least 2 classes")
    xb = _augment(w, inputs)
    if xb.shape[1] != 1:
        raise ShapeError("forward_classify takes a single m x k sequence")
    trace = _trace_from_batch(xb, *_recur(w, xb))
    logits = classify_logits(w, trace.h_end)
    return logits, softmax(logits), trace


def predict_proba(w: DbLstmWeights, batch) -> np.ndarray:
    """Class probabilities for a ``(B, m, k)`` batch of windows, shape ``(B, C)``."""
    if w.W_oh is None:
        raise ConfigurationError("classification needs W_oh")
    xb = _augment(w, batch)
    _, _, _, h = _recur(w, xb)
    logits = h[-1] @ w.W_oh.T
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def forecast_batch(w: DbLstmWeights, batch) -> np.ndarray:
    """Hidden-state outputs for a ``(B, m, k)`` batch, shape ``(B, n, k)``."""
    xb = _augment(w, batch)
    _, _, _, h = _recur(w, xb)
    return h[1:].transpose(1, 2, 0).copy()
