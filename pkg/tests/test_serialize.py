import json
import math

import numpy as np
import pytest

from dblstm import baseline
from dblstm.cell import ModelDims, init_weights
from dblstm.serialize import (
    HISTORY_HEADER,
    WeightFormatError,
    dumps,
    history_csv,
    load_weights,
    read_history,
    save_weights,
    weights_to_dict,
    write_json,
)
from dblstm.train import EpochRecord


@pytest.fixture
def weights():
    return init_weights(ModelDims(n=3, k=10, num_classes=5), seed=11)


def test_field_order_and_shapes(weights):
    doc = weights_to_dict(weights)
    assert list(doc) == ["cell_type", "dims", "seed", "b", "matrices"]
    first = doc["matrices"][0]
    assert list(first) == ["name", "rows", "cols", "data"]
    assert first["name"] == "W_f" and (first["rows"], first["cols"]) == (3, 2)
    # row-major order
    assert first["data"][:2] == weights.W_f[0].tolist()


def test_round_trip_is_exact(tmp_path, weights):
    p = tmp_path / "w.json"
    save_weights(p, weights)
    back = load_weights(p)
    assert back.b == weights.b and back.dims == weights.dims and back.seed == 11
    for name, v in weights.matrices().items():
        assert np.array_equal(back.matrices()[name], v)
    save_weights(tmp_path / "again.json", back)
    assert (tmp_path / "again.json").read_bytes() == p.read_bytes()


def test_baseline_round_trip(tmp_path):
    w = baseline.init_weights(ModelDims(n=2, k=4), seed=3)
    save_weights(tmp_path / "l.json", w)
    back = load_weights(tmp_path / "l.json")
    assert back.cell_type == "lstm" and weights_to_dict(back)["b"] is None
    assert all(np.array_equal(back.matrices()[k], v) for k, v in w.matrices().items())


def test_quant_block(weights):
    doc = json.loads(dumps(weights, bits=3))
    q = doc["matrices"][0]["quant"]
    assert list(q) == ["bits", "w_min", "w_max", "delta"] and q["bits"] == 3
    assert q["delta"] == pytest.approx((q["w_max"] - q["w_min"]) / 7)


@pytest.mark.parametrize("text", ["{", '{"cell_type": "gru"}', '{"cell_type": "dblstm", "dims": {"n": 1}}'])
def test_malformed_documents(tmp_path, text):
    p = tmp_path / "bad.json"
    p.write_text(text)
    with pytest.raises(WeightFormatError):
        load_weights(p)


def test_history_round_trip(tmp_path):
    hist = [EpochRecord(1, 1 / 3, 40.0), EpochRecord(2, 0.123456789012, 62.5, 0.1, 0.02)]
    text = history_csv(hist)
    assert text.splitlines()[0] == HISTORY_HEADER
    assert "0.3333333333333333" in text and text.splitlines()[1].endswith("nan,nan")
    p = tmp_path / "h.csv"
    p.write_text(text)
    rows = read_history(p)
    assert rows[1]["loss"] == 0.123456789012 and math.isnan(rows[0]["rmse"])


def test_write_json_maps_nan_to_null(tmp_path):
    p = tmp_path / "m.json"
    write_json(p, {"a": float("nan"), "b": np.float64(2.5), "c": [np.int64(3)]})
    assert json.loads(p.read_text()) == {"a": None, "b": 2.5, "c": [3]}
