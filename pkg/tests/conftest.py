import math

import numpy as np
import pytest

from dblstm import kernels


def scalar_dblstm_step(p, x, c_prev, h_prev):
    """Plain-float transcription of one DB-LSTM step with m = n = 1.

    ``p`` maps weight names to floats; the two input-weight entries are
    ``W_q`` (input) and ``Wb_q`` (bias column).
    """
    sig = lambda z: 1.0 / (1.0 + math.exp(-z))

    def s(q, cell):
        return p["W_" + q] * x + p["Wb_" + q] * p["b"] + p["R_" + q] * h_prev + p["C_" + q] * cell

    f = sig(s("f", c_prev))
    g = math.tanh(s("g", c_prev))
    i = sig(s("i", c_prev))
    c = f * c_prev + g * i
    o = sig(s("o", c))
    return c, math.tanh(c) * o


def scalar_params(w):
    p = {"b": w.b}
    for q in "fgio":
        p["W_" + q] = float(getattr(w, "W_" + q)[0, 0])
        p["Wb_" + q] = float(getattr(w, "W_" + q)[0, 1])
        p["R_" + q] = float(getattr(w, "R_" + q)[0, 0])
        p["C_" + q] = float(getattr(w, "C_" + q)[0, 0])
    return p


def scalar_dblstm_run(p, xs):
    c = h = 0.0
    hs = []
    for x in xs:
        c, h = scalar_dblstm_step(p, x, c, h)
        hs.append(h)
    return hs


@pytest.fixture(params=[True, False], ids=["compiled", "numpy"])
def engine(request, monkeypatch):
    """Run a test under both the compiled loops and the plain numpy path."""
    monkeypatch.setattr(kernels, "ENABLED", request.param and kernels.njit is not None)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
