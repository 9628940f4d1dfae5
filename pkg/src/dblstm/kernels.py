"""Compiled single-sequence recurrence and BPTT loops.

Online classification training runs one short window at a time, where the
per-step numpy call overhead dominates.  These loops do the same arithmetic
as ``cell._recur`` and ``backprop.backward_sequence`` with explicit indexing.
Results agree with the numpy path to rounding (tested to 1e-12).

Set ``ENABLED = False`` to force the numpy path.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

ENABLED = njit is not None


def _sig(z):
    # two-branch form keeps exp from overflowing
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _recur(W, R, C3, Co, x):
    k = x.shape[0]
    n = Co.shape[0]
    m1 = x.shape[1]
    sums = np.empty((k, 4 * n))
    acts = np.empty((k, 4 * n))
    c = np.zeros((k + 1, n))
    h = np.zeros((k + 1, n))
    for t in range(k):
        for r in range(3 * n):
            s = 0.0
            for j in range(m1):
                s += W[r, j] * x[t, j]
            for j in range(n):
                s += R[r, j] * h[t, j] + C3[r, j] * c[t, j]
            sums[t, r] = s
            if n <= r < 2 * n:
                acts[t, r] = math.tanh(s)
            else:
                acts[t, r] = _sig(s)
        for r in range(n):
            c[t + 1, r] = acts[t, r] * c[t, r] + acts[t, n + r] * acts[t, 2 * n + r]
        for r in range(n):
            q = 3 * n + r
            s = 0.0
            for j in range(m1):
                s += W[q, j] * x[t, j]
            for j in range(n):
                s += R[q, j] * h[t, j] + Co[r, j] * c[t + 1, j]
            sums[t, q] = s
            o = _sig(s)
            acts[t, q] = o
            h[t + 1, r] = math.tanh(c[t + 1, r]) * o
    return sums, acts, c, h


def _bptt(acts, c, dh_local, RT, C3T, CoT):
    """Gate-sum gradients ``(k, 4n)``; takes the transposed recurrent matrices."""
    k = acts.shape[0]
    n = CoT.shape[0]
    ds_all = np.zeros((k, 4 * n))
    dh_next = np.zeros(n)
    dc_next = np.zeros(n)
    dc = np.empty(n)
    for t in range(k - 1, -1, -1):
        ds = ds_all[t]
        for r in range(n):
            dh = dh_local[t, r] + dh_next[r]
            tc = math.tanh(c[t + 1, r])
            o = acts[t, 3 * n + r]
            ds[3 * n + r] = dh * tc * o * (1.0 - o)
            dc[r] = dh * o * (1.0 - tc * tc) + dc_next[r]
        for j in range(n):
            s = 0.0
            for r in range(n):
                s += CoT[j, r] * ds[3 * n + r]
            dc[j] += s
        for r in range(n):
            f = acts[t, r]
            g = acts[t, n + r]
            i = acts[t, 2 * n + r]
            ds[r] = dc[r] * c[t, r] * f * (1.0 - f)
            ds[n + r] = dc[r] * i * (1.0 - g * g)
            ds[2 * n + r] = dc[r] * g * i * (1.0 - i)
        for j in range(n):
            sh = 0.0
            for r in range(4 * n):
                sh += RT[j, r] * ds[r]
            sc = dc[j] * acts[t, j]
            for r in range(3 * n):
                sc += C3T[j, r] * ds[r]
            dh_next[j] = sh
            dc_next[j] = sc
    return ds_all


if njit is not None:
    _sig = njit(cache=True, inline="always")(_sig)
    recur = njit(cache=True)(_recur)
    bptt = njit(cache=True)(_bptt)
else:  # pragma: no cover
    recur = _recur
    bptt = _bptt
