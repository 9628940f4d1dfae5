"""Dense linear algebra and activation kernels.

Everything runs in float64.  Vectors are 1-D arrays; weights are 2-D.
"""

import numpy as np
from scipy.special import expit


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def hadamard(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard product needs equal shapes, got {a.shape} and {b.shape}")
    return a * b


def sigmoid(x):
    """Logistic function.

    ``expit`` evaluates ``exp(-x)`` only where it cannot overflow, so large
    negative inputs saturate to tiny positives instead of raising.
    """
    out = expit(np.asarray(x, dtype=np.float64))
    if out.ndim == 0:
        return float(out)
    return out


def tanh_act(x):
    out = np.tanh(np.asarray(x, dtype=np.float64))
    if out.ndim == 0:
        return float(out)
    return out


def dsigmoid_from_output(y):
    """Sigmoid slope expressed through the activated value ``y = sigmoid(x)``."""
    return y * (1.0 - y)


def dtanh_from_output(y):
    """Tanh slope expressed through the activated value ``y = tanh(x)``."""
    return 1.0 - y * y


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - np.max(z))
    return e / e.sum()
