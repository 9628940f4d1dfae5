#!/usr/bin/env python3
"""How the fixed-point ladder treats one weight matrix.

Each matrix gets 2**bits magnitude levels between its smallest and largest
absolute entry.  Entries keep their sign, so there are at most 2 * 2**bits
distinct values after quantization.
"""

import numpy as np

from dblstm.quantize import derive_spec, quantize_matrix

rng = np.random.default_rng(0)
W = rng.uniform(-0.4, 0.4, size=(4, 6))
print("original weights\n", np.round(W, 3))

for bits in (1, 2, 3, 4):
    spec = derive_spec(W, bits)
    Q = quantize_matrix(W, spec)
    err = np.abs(Q - W).max()
    print(f"\n{bits} bits: ladder {np.round(spec.states(), 3)}")
    print(f"  distinct values {len(np.unique(Q))} (bound {2 * 2 ** bits}), "
          f"max error {err:.4f} <= delta/2 = {spec.delta / 2:.4f}")

# Quantizing again with a ladder derived from the result changes nothing.
Q = quantize_matrix(W, derive_spec(W, 3))
print("\nidempotent:", np.array_equal(quantize_matrix(Q, derive_spec(Q, 3)), Q))
