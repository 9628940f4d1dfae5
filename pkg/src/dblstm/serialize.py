"""JSON export/import of weight sets.

Layout (key order fixed so diffs stay readable)::

    {"cell_type": "dblstm", "dims": {...}, "seed": 0, "b": 0.54,
     "matrices": [{"name": "W_f", "rows": 1, "cols": 2, "data": [...]}, ...]}

Quantized exports add ``"quant": {"bits", "w_min", "w_max", "delta"}`` to
each matrix entry.  Floats are written with ``repr`` precision so a
round-trip is exact.
"""

from __future__ import annotations

import json
import math

import numpy as np

from dblstm.baseline import LstmWeights
from dblstm.cell import DbLstmWeights, ModelDims
from dblstm.quantize import quant_report

_TYPES = {"dblstm": DbLstmWeights, "lstm": LstmWeights}


class WeightFormatError(ValueError):
    pass


def weights_to_dict(w, bits: int | None = None) -> dict:
    quant = quant_report(w, bits) if bits else {}
    mats = []
    for name, value in w.matrices().items():
        entry = {"name": name, "rows": int(value.shape[0]), "cols": int(value.shape[1]),
                 "data": [float(v) for v in value.ravel()]}
        if name in quant:
            entry["quant"] = quant[name]
        mats.append(entry)
    d = w.dims
    return {
        "cell_type": w.cell_type,
        "dims": {"m": d.m, "n": d.n, "k": d.k, "num_classes": d.num_classes},
        "seed": w.seed,
        "b": getattr(w, "b", None),
        "matrices": mats,
    }


def weights_from_dict(doc: dict):
    try:
        kind = doc["cell_type"]
        cls = _TYPES[kind]
        dims = ModelDims(**doc["dims"])
        mats = {}
        for entry in doc["matrices"]:
            data = np.asarray(entry["data"], dtype=np.float64)
            mats[entry["name"]] = data.reshape(entry["rows"], entry["cols"])
    except (KeyError, TypeError, ValueError) as exc:
        raise WeightFormatError(f"malformed weight document: {exc}") from exc
    extra = {"b": doc.get("b")} if kind == "dblstm" else {}
    return cls(dims=dims, seed=doc.get("seed"), **extra, **mats)


def dumps(w, bits: int | None = None) -> str:
    return json.dumps(weights_to_dict(w, bits), indent=1) + "\n"


def save_weights(path, w, bits: int | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(w, bits))


def load_weights(path):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise WeightFormatError(f"{path}: not valid JSON ({exc})") from exc
    return weights_from_dict(doc)


# -- run outputs -------------------------------------------------------------

HISTORY_HEADER = "epoch,loss,accuracy,rmse,nmse"


def fmt(v) -> str:
    """Shortest round-tripping decimal; always at least the precision stored."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def history_csv(history) -> str:
    lines = [HISTORY_HEADER]
    for r in history:
        lines.append(",".join([str(r.epoch), fmt(r.loss), fmt(r.accuracy), fmt(r.rmse), fmt(r.nmse)]))
    return "\n".join(lines) + "\n"


def write_history(path, history) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(history_csv(history))


def read_history(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        rows = [line.rstrip("\n").split(",") for line in fh]
    if not rows or ",".join(rows[0]) != HISTORY_HEADER:
        raise WeightFormatError(f"{path}: missing history header")
    return [{"epoch": int(r[0]), "loss": float(r[1]), "accuracy": float(r[2]),
             "rmse": float(r[3]), "nmse": float(r[4])} for r in rows[1:]]


def _clean(obj):
    # NaN is not valid JSON; write null instead
    if isinstance(obj, float):
        return None if math.isnan(obj) else obj
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def write_json(path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(_clean(doc), indent=1, allow_nan=False) + "\n")
