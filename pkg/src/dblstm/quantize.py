"""Fixed-point weight quantization.

Each weight matrix gets its own magnitude ladder of ``2**bits`` states running
from the smallest to the largest absolute entry in equal steps.  Entries snap
their magnitude to the nearest state and keep their sign, so a matrix can hold
at most ``2 * 2**bits`` distinct values.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class QuantSpec:
    bits: int
    w_min: float
    w_max: float
    delta: float

    @property
    def n_states(self) -> int:
        return 2 ** self.bits

    def states(self) -> np.ndarray:
        """Magnitude ladder; the top state is pinned to ``w_max`` exactly."""
        if self.delta == 0:
            return np.array([self.w_min])
        s = self.w_min + self.delta * np.arange(self.n_states)
        s[-1] = self.w_max
        return s

    def to_dict(self) -> dict:
        return asdict(self)


def derive_spec(m, bits: int) -> QuantSpec:
    if bits < 1:
        raise ValueError("bits must be >= 1")
    a = np.abs(np.asarray(m, dtype=np.float64))
    if a.size == 0:
        raise ValueError("cannot derive a ladder from an empty matrix")
    w_min, w_max = float(a.min()), float(a.max())
    delta = (w_max - w_min) / (2 ** bits - 1) if w_max > w_min else 0.0
    return QuantSpec(bits=bits, w_min=w_min, w_max=w_max, delta=delta)


def _snap_magnitudes(a: np.ndarray, spec: QuantSpec) -> np.ndarray:
    states = spec.states()
    if spec.delta == 0:
        return np.full_like(a, spec.w_min)
    top = spec.n_states - 1
    j = np.clip(np.floor((a - spec.w_min) / spec.delta), 0, top).astype(np.int64)
    # An entry goes up a state only when strictly beyond half an interval,
    # so exact midpoints stay on the lower state.  The slack absorbs the
    # rounding of w_min + j * delta.
    slack = 4 * np.finfo(np.float64).eps * max(spec.w_max, 1.0)
    up = (a - states[j] > 0.5 * spec.delta + slack) & (j < top)
    j = j + up
    return states[j]


def quantize_matrix(m, spec: QuantSpec) -> np.ndarray:
    """Snap every entry to the signed ladder described by ``spec``.

    Zeros are treated as positive and land on ``+w_min``.
    """
    m = np.asarray(m, dtype=np.float64)
    sign = np.where(m < 0, -1.0, 1.0)
    return sign * _snap_magnitudes(np.abs(m), spec)


def quantize_weights(w, bits: int):
    """Quantize each trainable matrix against its own ladder; ``b`` untouched."""
    if bits < 1:
        raise ValueError("bits must be >= 1")
    return w.with_matrices({
        name: quantize_matrix(v, derive_spec(v, bits))
        for name, v in w.matrices().items()
    })


def quant_report(w, bits: int) -> dict[str, dict]:
    """Per-matrix ladder parameters, as written into weight exports."""
    return {name: derive_spec(v, bits).to_dict() for name, v in w.matrices().items()}
