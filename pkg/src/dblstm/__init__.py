"""DB-LSTM: an LSTM variant with cell-state inputs to every gate and a shared scalar bias.

Numpy implementation of the forward pass, truncation-free BPTT, fixed-point
weight quantization, a conventional LSTM baseline, ECG preprocessing and the
training loops that tie them together.
"""

from dblstm.backprop import Gradients, apply_update, backward_classify, backward_forecast
from dblstm.cell import (
    ConfigurationError,
    DbLstmWeights,
    ModelDims,
    forward_classify,
    forward_forecast,
    init_weights,
    param_count,
    predict_proba,
)
from dblstm.quantize import QuantSpec, derive_spec, quantize_matrix, quantize_weights
from dblstm.serialize import load_weights, save_weights
from dblstm.train import (
    ConfusionMatrix,
    DivergenceError,
    EpochRecord,
    RunConfig,
    compare_models,
    evaluate_classify,
    evaluate_forecast,
    quantize_sweep,
    train_classify,
    train_forecast,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "ConfusionMatrix", "DbLstmWeights", "DivergenceError",
    "EpochRecord", "Gradients", "ModelDims", "QuantSpec", "RunConfig",
    "apply_update", "backward_classify", "backward_forecast", "compare_models",
    "derive_spec", "evaluate_classify", "evaluate_forecast", "forward_classify",
    "forward_forecast", "init_weights", "load_weights", "param_count",
    "predict_proba", "quantize_matrix", "quantize_sweep", "quantize_weights", "save_weights",
    "train_classify", "train_forecast",
]
