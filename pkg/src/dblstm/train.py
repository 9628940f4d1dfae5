"""Training loops, metrics, quantization sweeps and the baseline comparison."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from dblstm import backprop, baseline, cell
from dblstm.backprop import apply_update
from dblstm.cell import ModelDims
from dblstm.ecg import LABELS, NORMALIZE_MODES, ClassifyDataset, ForecastDataset
from dblstm.quantize import quantize_weights

DIVERGENCE_LIMIT = 1e6


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


class UndefinedMetricError(ValueError):
    """Metric is undefined for the given target (e.g. NMSE of a constant)."""


@dataclass
class RunConfig:
    task: str = "forecast"
    eta: float = 0.1
    weight_penalty: float = 0.01
    clip: float | None = None
    epochs: int = 100
    k: int = 180
    hidden: int = 1
    bits: int | None = None
    inplace_quant: bool = False
    seed: int = 0
    init_scale: float = 0.1
    bias_value: float | None = None
    model: str = "dblstm"
    # forecasting
    delay: int = 280
    train_len: int | None = None
    val_start: int | None = None  # default: the segment after the training pair
    peak: float | None = 0.5
    # classification
    train_per_class: int = 200
    val_per_class: int = 50
    # preprocessing
    threshold: float = 0.04
    normalize: str = "window"

    def __post_init__(self):
        if self.task not in ("forecast", "classify"):
            raise ValueError(f"task must be 'forecast' or 'classify', got {self.task!r}")
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.bits is not None and not 1 <= self.bits <= 16:
            raise ValueError("bits must be in 1..16")
        if self.weight_penalty < 0:
            raise ValueError("weight_penalty must be >= 0")
        if self.clip is not None and not self.clip > 0:
            raise ValueError("clip must be > 0")
        if self.hidden < 1 or self.k < 1:
            raise ValueError("hidden and k must be >= 1")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be > 0")
        if self.normalize not in NORMALIZE_MODES:
            raise ValueError(f"normalize must be one of {NORMALIZE_MODES}")
        if self.val_start is not None and self.val_start < 0:
            raise ValueError("val_start must be >= 0")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {sorted(MODELS)}")

    @classmethod
    def for_task(cls, task: str, **overrides) -> RunConfig:
        """Defaults from the reported training setups for each task."""
        if task == "classify":
            base = dict(task="classify", eta=0.01, weight_penalty=0.01, clip=0.05,
                        epochs=100, k=180, hidden=32)
        else:
            base = dict(task="forecast", eta=0.1, weight_penalty=0.01, clip=None,
                        epochs=100, hidden=1, delay=280)
        base.update(overrides)
        return cls(**base)

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float
    rmse: float = math.nan
    nmse: float = math.nan


@dataclass
class ConfusionMatrix:
    """Rows are actual labels, columns predicted labels."""

    counts: np.ndarray

    @classmethod
    def from_predictions(cls, actual, predicted, num_classes: int = len(LABELS)) -> ConfusionMatrix:
        counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        np.add.at(counts, (np.asarray(actual, dtype=int), np.asarray(predicted, dtype=int)), 1)
        return cls(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        """Percent of the diagonal."""
        return 100.0 * int(np.trace(self.counts)) / self.total if self.total else 0.0

    def tolist(self) -> list[list[int]]:
        return self.counts.astype(int).tolist()


@dataclass(frozen=True)
class _Model:
    init: Callable
    forward_forecast: Callable
    backward_forecast: Callable
    forward_classify: Callable
    backward_classify: Callable
    predict_proba: Callable
    forecast_batch: Callable
    param_count: Callable


MODELS = {
    "dblstm": _Model(cell.init_weights, cell.forward_forecast, backprop.backward_forecast,
                     cell.forward_classify, backprop.backward_classify,
                     cell.predict_proba, cell.forecast_batch, cell.param_count),
    "lstm": _Model(baseline.init_weights, baseline.forward_forecast, baseline.backward_forecast,
                   baseline.forward_classify, baseline.backward_classify,
                   baseline.predict_proba, baseline.forecast_batch, baseline.param_count),
}


def model_ops(name_or_weights) -> _Model:
    name = getattr(name_or_weights, "cell_type", name_or_weights)
    return MODELS[name]


# -- metrics -----------------------------------------------------------------

def _pair(pred, target):
    p = np.asarray(pred, dtype=np.float64).ravel()
    t = np.asarray(target, dtype=np.float64).ravel()
    if p.size != t.size:
        raise ValueError(f"prediction has {p.size} values, target {t.size}")
    return p, t


def rmse(pred, target) -> float:
    p, t = _pair(pred, target)
    return math.sqrt(float(np.mean((t - p) ** 2)))


def nmse(pred, target) -> float:
    p, t = _pair(pred, target)
    denom = float(np.sum((t - t.mean()) ** 2))
    if denom == 0:
        raise UndefinedMetricError("NMSE is undefined for a constant target")
    return float(np.sum((t - p) ** 2)) / denom


def forecast_accuracy(pred, target) -> float:
    """Non-canonical regression accuracy: ``100 * max(0, 1 - sum|e| / sum|y - mean y|)``."""
    p, t = _pair(pred, target)
    denom = float(np.sum(np.abs(t - t.mean())))
    if denom == 0:
        return 100.0 if np.array_equal(p, t) else 0.0
    return 100.0 * max(0.0, 1.0 - float(np.sum(np.abs(t - p))) / denom)


def forecast_metrics(pred, target) -> dict[str, float]:
    try:
        nm = nmse(pred, target)
    except UndefinedMetricError:
        nm = math.nan
    return {"rmse": rmse(pred, target), "nmse": nm, "accuracy": forecast_accuracy(pred, target)}


# -- training ----------------------------------------------------------------

def _check(epoch: int, loss: float) -> None:
    if not math.isfinite(loss) or loss > DIVERGENCE_LIMIT:
        raise DivergenceError(epoch, loss)


def _view(shadow, cfg: RunConfig):
    return shadow if cfg.bits is None else quantize_weights(shadow, cfg.bits)


def _step(shadow, grads, cfg: RunConfig):
    if cfg.bits is not None and cfg.inplace_quant:
        # update the quantized values themselves, then snap back to the ladder
        q = quantize_weights(shadow, cfg.bits)
        return quantize_weights(apply_update(q, grads, cfg.eta, cfg.weight_penalty, cfg.clip), cfg.bits)
    return apply_update(shadow, grads, cfg.eta, cfg.weight_penalty, cfg.clip)


def init_model(cfg: RunConfig, m: int = 1, num_classes: int = 0, k: int | None = None):
    dims = ModelDims(m=m, n=cfg.hidden, k=k or cfg.k, num_classes=num_classes)
    return MODELS[cfg.model].init(dims, seed=cfg.seed, scale=cfg.init_scale,
                                  bias_value=cfg.bias_value)


def train_forecast(cfg: RunConfig, data: ForecastDataset, weights=None):
    """Full-window gradient descent, one update per epoch.

    With ``cfg.bits`` set the forward/backward passes use the quantized view
    of full-precision shadow weights and the update lands on the shadows; the
    returned weights are the quantized view.
    """
    if cfg.task != "forecast":
        raise ValueError("train_forecast needs cfg.task == 'forecast'")
    ops = MODELS[cfg.model]
    shadow = weights if weights is not None else init_model(cfg, m=data.inputs.shape[0], k=data.k)
    targets = np.tile(data.targets, (shadow.dims.n, 1)) if data.targets.shape[0] != shadow.dims.n else data.targets
    history = []
    for epoch in range(1, cfg.epochs + 1):
        w = _view(shadow, cfg)
        out, trace = ops.forward_forecast(w, data.inputs)
        grads, loss = ops.backward_forecast(trace, targets, w)
        _check(epoch, loss)
        met = forecast_metrics(out, targets)
        history.append(EpochRecord(epoch, loss, met["accuracy"], met["rmse"], met["nmse"]))
        shadow = _step(shadow, grads, cfg)
    return _view(shadow, cfg), history


def predict_forecast(w, inputs) -> np.ndarray:
    out, _ = model_ops(w).forward_forecast(w, inputs)
    return out


def evaluate_forecast(w, data: ForecastDataset) -> dict[str, float]:
    out = predict_forecast(w, data.inputs)
    targets = np.tile(data.targets, (w.dims.n, 1)) if data.targets.shape[0] != w.dims.n else data.targets
    res = forecast_metrics(out, targets)
    res["loss"] = backprop.mse_loss(out, targets)
    return res


def predict_labels(w, windows: np.ndarray, batch: int = 512) -> np.ndarray:
    """Argmax class per window; ties go to the lowest index."""
    ops = model_ops(w)
    preds = []
    for lo in range(0, len(windows), batch):
        p = ops.predict_proba(w, windows[lo:lo + batch])
        preds.append(np.argmax(p, axis=1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=int)


def evaluate_classify(w, data: ClassifyDataset) -> ConfusionMatrix:
    X, y = data.stacked()
    return ConfusionMatrix.from_predictions(y, predict_labels(w, X), w.dims.num_classes)


def train_classify(cfg: RunConfig, train: ClassifyDataset, val: ClassifyDataset,
                   weights=None, num_classes: int = len(LABELS),
                   on_epoch: Callable[[EpochRecord], None] | None = None):
    """Online training: one update per window, windows shuffled each epoch.

    Records mean training cross-entropy and validation accuracy per epoch.
    """
    if cfg.task != "classify":
        raise ValueError("train_classify needs cfg.task == 'classify'")
    if len(train) == 0 or len(val) == 0:
        raise ValueError("both training and validation sets must be nonempty")
    ops = MODELS[cfg.model]
    X, y = train.stacked()
    shadow = weights if weights is not None else init_model(
        cfg, m=X.shape[1], num_classes=num_classes, k=train.k)
    rng = np.random.default_rng([cfg.seed, 1])
    history = []
    for epoch in range(1, cfg.epochs + 1):
        total = 0.0
        for j in rng.permutation(len(X)):
            w = _view(shadow, cfg)
            _, probs, trace = ops.forward_classify(w, X[j])
            grads, loss = ops.backward_classify(trace, probs, int(y[j]), w)
            total += loss
            shadow = _step(shadow, grads, cfg)
        mean_loss = total / len(X)
        _check(epoch, mean_loss)
        cm = evaluate_classify(_view(shadow, cfg), val)
        rec = EpochRecord(epoch, mean_loss, cm.accuracy)
        history.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
    final = _view(shadow, cfg)
    return final, history, evaluate_classify(final, val)


# -- experiments -------------------------------------------------------------

FULL_PRECISION_BITS = (0, 32)

@dataclass
class SweepEntry:
    bits: int  # 0 marks full precision
    history: list[EpochRecord]
    final: dict[str, float]
    weights: object = field(repr=False, default=None)
    confusion: ConfusionMatrix | None = None


def _run(cfg: RunConfig, data):
    if cfg.task == "forecast":
        w, hist = train_forecast(cfg, data)
        final = evaluate_forecast(w, data)
        return w, hist, final, None
    train, val = data
    w, hist, cm = train_classify(cfg, train, val)
    final = {"loss": hist[-1].loss, "accuracy": cm.accuracy}
    return w, hist, final, cm


def quantize_sweep(cfg: RunConfig, data, bits_list) -> list[SweepEntry]:
    """One run per bit width plus a full-precision run, all with ``cfg.seed``.

    ``data`` is a ForecastDataset or a ``(train, val)`` pair.  A value of 0 or
    32 in ``bits_list`` names the full-precision run explicitly; it is added
    anyway if missing.  Entries come back sorted by bits with full precision
    first as ``bits=0``.
    """
    bits_list = [int(b) for b in bits_list]
    if not bits_list:
        raise ValueError("bits_list is empty")
    wanted = {0 if b in FULL_PRECISION_BITS else b for b in bits_list}
    out = []
    for bits in sorted(wanted | {0}):
        w, hist, final, cm = _run(cfg.replace(bits=bits or None), data)
        out.append(SweepEntry(bits, hist, final, w, cm))
    return out


def epochs_to_threshold(history: list[EpochRecord], threshold: float) -> int | None:
    for rec in history:
        if rec.loss <= threshold:
            return rec.epoch
    return None


def compare_models(cfg: RunConfig, data, seeds, threshold: float | None = None) -> dict:
    """Train DB-LSTM and the conventional LSTM on matched settings per seed.

    ``threshold`` is the loss level for the epochs-to-threshold count; by
    default a tenth of the first-epoch loss averaged over every run.
    """
    seeds = list(seeds)
    if len(seeds) < 3:
        raise ValueError("compare_models needs at least 3 seeds")
    runs = {"dblstm": [], "lstm": []}
    for model in runs:
        for seed in seeds:
            w, hist, final, cm = _run(cfg.replace(model=model, seed=seed), data)
            runs[model].append({"seed": seed, "history": hist, "final": final,
                                "n_params": w.n_params()})
    if threshold is None:
        first = [r["history"][0].loss for rs in runs.values() for r in rs]
        threshold = 0.1 * float(np.mean(first))
    summary = {"threshold": threshold, "seeds": seeds}
    for model, rs in runs.items():
        for r in rs:
            r["epochs_to_threshold"] = epochs_to_threshold(r["history"], threshold)
        summary[model] = {
            "runs": rs,
            "mean_initial_loss": float(np.mean([r["history"][0].loss for r in rs])),
            "mean_final_loss": float(np.mean([r["history"][-1].loss for r in rs])),
            "mean_final_accuracy": float(np.mean([r["final"]["accuracy"] for r in rs])),
        }
    return summary
