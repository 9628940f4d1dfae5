#!/usr/bin/env python3
"""Five-class beat classification and the cost of low-precision weights.

Beat-centred windows of 180 samples come from a synthetic record with all
five classes.  Training is online (one update per window).  The same seed is
then trained with 4-bit and 3-bit weights.

A full run takes several minutes; pass a smaller epoch count to try it out:

    python scripts/classify_beats.py 20
"""

import sys

import numpy as np

from dblstm.ecg import LABELS, synth_ecg, window_dataset
from dblstm.train import RunConfig, train_classify

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 100

record = synth_ecg(beats_per_class=250, period=300, noise_amp=0.02, jitter=0.1, seed=0)
train, val = window_dataset(record, k=180).split(200)
print(f"{len(train)} training windows, {len(val)} validation windows, counts {val.counts}")

cfg = RunConfig.for_task("classify", epochs=epochs)
w, hist, cm = train_classify(
    cfg, train, val,
    on_epoch=lambda r: print(f"  epoch {r.epoch:3d}  loss {r.loss:.3f}  val acc {r.accuracy:5.1f}%"),
)

print("\nconfusion matrix (rows: true, columns: predicted)")
print("     " + "  ".join(f"{c:>4}" for c in LABELS))
for label, row in zip(LABELS, cm.counts):
    print(f"  {label}  " + "  ".join(f"{v:4d}" for v in row))
print(f"accuracy {cm.accuracy:.1f}%, diagonal share {np.trace(cm.counts) / cm.total:.3f}")

# Shadow weights train in full precision; every forward pass sees the quantized view.
for bits in (4, 3):
    _, _, qcm = train_classify(cfg.replace(bits=bits), train, val)
    print(f"INT{bits}: validation accuracy {qcm.accuracy:.1f}% (full precision {cm.accuracy:.1f}%)")
