"""Command-line entry point: ``dblstm <command> [options]``.

Settings come from built-in task defaults, then an optional ``key = value``
config file, then flags (flags win).  Exit codes: 0 success, 2 usage or
validation error, 3 numerical divergence, 1 anything unexpected.

Every output file is a pure function of the inputs and flags; wall-clock
time goes only into ``run_meta.json``.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import time

import numpy as np

from dblstm import serialize
from dblstm.cell import ConfigurationError
from dblstm.ecg import (
    LABELS,
    NORMALIZE_MODES,
    AnnotatedSeries,
    ParseError,
    load_annotations,
    load_csv_series,
    make_forecast_pairs,
    preprocess_forecast,
    preprocess_window,
    synth_ecg,
    window_dataset,
    write_annotations,
    write_csv_series,
)
from dblstm.numerics import ShapeError
from dblstm.quantize import quant_report
from dblstm.serialize import WeightFormatError, fmt
from dblstm.train import (
    DivergenceError,
    RunConfig,
    compare_models,
    evaluate_classify,
    evaluate_forecast,
    model_ops,
    predict_forecast,
    predict_labels,
    quantize_sweep,
    train_classify,
    train_forecast,
)

EXIT_OK, EXIT_UNEXPECTED, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3

PATH_KEYS = ("series", "annotations", "out_dir")
_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


class UsageError(Exception):
    """Bad flags, config or input files; maps to exit code 2."""


# -- config files -------------------------------------------------------------

def _convert(key: str, raw: str):
    if key in PATH_KEYS or key in ("task", "model", "normalize"):
        return raw
    default = _FIELDS[key].default
    if raw.lower() in ("none", "null", ""):
        if default is not None and key not in ("clip", "bits", "bias_value", "train_len", "val_start", "peak"):
            raise ValueError(f"{key} cannot be none")
        return None
    if key == "inplace_quant":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if key in ("epochs", "k", "hidden", "bits", "seed", "delay", "train_len", "val_start",
               "train_per_class", "val_per_class"):
        return int(raw)
    return float(raw)


def parse_config(path) -> dict:
    """Read ``key = value`` lines; ``#`` starts a comment.

    Raises UsageError naming the file and line on unknown keys, malformed
    lines and values that break a RunConfig invariant.
    """
    out: dict = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in _FIELDS and key not in PATH_KEYS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = _convert(key, raw)
                if key in _FIELDS:
                    # check invariants one key at a time so the line is known
                    RunConfig.for_task(out.get("task", "forecast"),
                                       **{k: v for k, v in out.items()
                                          if k in _FIELDS and k != "task"})
            except ValueError as exc:
                raise UsageError(f"{path}:{lineno}: {key}: {exc}") from None
    return out


def resolve(args, task: str | None = None) -> tuple[RunConfig, dict]:
    """Merge task defaults, config file and flags into a RunConfig plus paths."""
    conf = parse_config(args.config) if getattr(args, "config", None) else {}
    flags = {k: v for k, v in vars(args).items()
             if (k in _FIELDS or k in PATH_KEYS) and v is not None}
    merged = {**conf, **flags}
    task = task or merged.get("task") or "forecast"
    merged.pop("task", None)
    paths = {k: merged.pop(k, None) for k in PATH_KEYS}
    try:
        cfg = RunConfig.for_task(task, **merged)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    return cfg, paths


# -- data -----------------------------------------------------------------------

def _need(paths: dict, key: str) -> str:
    p = paths.get(key)
    if not p:
        raise UsageError(f"--{key.replace('_', '-')} is required")
    if key != "out_dir" and not os.path.isfile(p):
        raise UsageError(f"{key} file not found: {p}")
    return p


def _out_dir(paths: dict) -> str:
    d = _need(paths, "out_dir")
    os.makedirs(d, exist_ok=True)
    return d


def forecast_data(cfg: RunConfig, series_path: str):
    s = load_csv_series(series_path)
    y = preprocess_forecast(s, cfg.threshold, cfg.peak)
    return make_forecast_pairs(y, cfg.delay, cfg.train_len or cfg.delay)


def forecast_validation(cfg: RunConfig, series_path: str):
    """Pair starting at ``val_start`` (default: right after the training span), or None."""
    y = preprocess_forecast(load_csv_series(series_path), cfg.threshold, cfg.peak)
    train_len = cfg.train_len or cfg.delay
    start = train_len if cfg.val_start is None else cfg.val_start
    if start + train_len + cfg.delay > y.samples.size:
        if cfg.val_start is not None:
            raise UsageError(f"val_start={start} leaves no room for a validation pair "
                             f"in {y.samples.size} samples")
        return None
    return make_forecast_pairs(y, cfg.delay, train_len, start)


def classify_data(cfg: RunConfig, series_path: str, annotations_path: str):
    a = AnnotatedSeries(load_csv_series(series_path), load_annotations(annotations_path))
    ds = window_dataset(a, cfg.k, per_class=cfg.train_per_class + cfg.val_per_class,
                        threshold=cfg.threshold, normalize=cfg.normalize)
    train, val = ds.split(cfg.train_per_class)
    if len(train) == 0 or len(val) == 0:
        raise UsageError("annotations give an empty training or validation split "
                         f"(per-class counts {ds.counts})")
    return train, val


def task_data(cfg: RunConfig, paths: dict):
    if cfg.task == "forecast":
        return forecast_data(cfg, _need(paths, "series"))
    return classify_data(cfg, _need(paths, "series"), _need(paths, "annotations"))


# -- outputs --------------------------------------------------------------------

def metrics_doc(cfg: RunConfig, weights, final: dict, confusion=None) -> dict:
    doc = {
        "config": cfg.to_dict(),
        "task": cfg.task,
        "model": cfg.model,
        "param_count": int(model_ops(weights).param_count(weights.dims)),
        "final": final,
    }
    if cfg.task == "forecast":
        doc["accuracy_note"] = "accuracy is 100*(1 - sum|e|/sum|y-mean(y)|), a non-canonical surrogate"
    if confusion is not None:
        doc["labels"] = list(LABELS)
        doc["confusion_matrix"] = confusion.tolist()
    if cfg.bits is not None:
        doc["quant"] = {"bits": cfg.bits, "inplace": cfg.inplace_quant,
                        "matrices": quant_report(weights, cfg.bits)}
    return doc


def _write_meta(out_dir: str, t0: float, **extra) -> None:
    serialize.write_json(os.path.join(out_dir, "run_meta.json"),
                         {"wall_time_seconds": time.perf_counter() - t0, **extra})


def _final_line(final: dict) -> str:
    return " ".join(f"{k}={fmt(v)}" for k, v in final.items())


# -- commands -------------------------------------------------------------------

def cmd_synth_ecg(args) -> int:
    classes = [c.strip() for c in args.classes.split(",") if c.strip()]
    bad = [c for c in classes if c not in LABELS]
    if bad or not classes:
        raise UsageError(f"--classes must be drawn from {','.join(LABELS)}, got {args.classes!r}")
    if args.beats < 1:
        raise UsageError("--beats must be >= 1")
    try:
        a = synth_ecg(classes, args.beats, args.period, args.noise, args.seed, args.jitter)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    os.makedirs(args.out, exist_ok=True)
    write_csv_series(os.path.join(args.out, "series.csv"), a.series)
    write_annotations(os.path.join(args.out, "annotations.csv"), a.annotations)
    print(f"wrote {len(a.series)} samples and {len(a.annotations)} annotations to {args.out}")
    return EXIT_OK


def _train(args, task: str) -> int:
    cfg, paths = resolve(args, task)
    data = task_data(cfg, paths)
    out = _out_dir(paths)
    t0 = time.perf_counter()
    validation = None
    if task == "forecast":
        w, hist = train_forecast(cfg, data)
        final = evaluate_forecast(w, data)
        cm = None
        val_data = forecast_validation(cfg, paths["series"])
        if val_data is not None:
            validation = evaluate_forecast(w, val_data)
    else:
        w, hist, cm = train_classify(cfg, *data)
        final = {"loss": hist[-1].loss, "accuracy": cm.accuracy}
    serialize.write_history(os.path.join(out, "history.csv"), hist)
    doc = metrics_doc(cfg, w, final, cm)
    if validation is not None:
        doc["validation"] = validation
    serialize.write_json(os.path.join(out, "metrics.json"), doc)
    serialize.save_weights(os.path.join(out, "weights.json"), w, cfg.bits)
    _write_meta(out, t0)
    print(_final_line(final))
    return EXIT_OK


def cmd_train_forecast(args) -> int:
    return _train(args, "forecast")


def cmd_train_classify(args) -> int:
    return _train(args, "classify")


def _int_list(text: str, flag: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{flag} must be a comma-separated integer list, got {text!r}") from None
    if not vals:
        raise UsageError(f"{flag} is empty")
    return vals


def cmd_quantize_sweep(args) -> int:
    cfg, paths = resolve(args)
    bits_list = _int_list(args.bits_list, "--bits")
    for b in bits_list:
        if b not in (0, 32) and not 1 <= b <= 16:
            raise UsageError(f"--bits entries must be 1..16, or 0/32 for full precision; got {b}")
    data = task_data(cfg, paths)
    out = _out_dir(paths)
    t0 = time.perf_counter()
    entries = quantize_sweep(cfg, data, bits_list)
    rows = ["bits,final_loss,final_accuracy"]
    for e in entries:
        run_cfg = cfg.replace(bits=e.bits or None)
        serialize.write_json(os.path.join(out, f"metrics_bits{e.bits}.json"),
                             metrics_doc(run_cfg, e.weights, e.final, e.confusion))
        serialize.write_history(os.path.join(out, f"history_bits{e.bits}.csv"), e.history)
        rows.append(f"{e.bits},{fmt(e.history[-1].loss)},{fmt(e.final['accuracy'])}")
    with open(os.path.join(out, "summary.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")
    _write_meta(out, t0)
    print("\n".join(rows))
    return EXIT_OK


def cmd_compare_baseline(args) -> int:
    cfg, paths = resolve(args)
    seeds = _int_list(args.seeds, "--seeds")
    if len(seeds) < 3:
        raise UsageError("--seeds needs at least 3 seeds")
    data = task_data(cfg, paths)
    out = _out_dir(paths)
    t0 = time.perf_counter()
    summary = compare_models(cfg, data, seeds)
    doc = {"config": cfg.to_dict(), "threshold": summary["threshold"], "seeds": seeds}
    for model in ("dblstm", "lstm"):
        block = dict(summary[model])
        runs = []
        for r in block.pop("runs"):
            serialize.write_history(os.path.join(out, f"history_{model}_seed{r['seed']}.csv"),
                                    r["history"])
            runs.append({"seed": r["seed"], "initial_loss": r["history"][0].loss,
                         "final_loss": r["history"][-1].loss, "final": r["final"],
                         "epochs_to_threshold": r["epochs_to_threshold"],
                         "n_params": r["n_params"]})
        block["runs"] = runs
        doc[model] = block
    serialize.write_json(os.path.join(out, "summary.json"), doc)
    _write_meta(out, t0)
    print(f"dblstm mean final loss {fmt(doc['dblstm']['mean_final_loss'])}, "
          f"lstm mean final loss {fmt(doc['lstm']['mean_final_loss'])}")
    return EXIT_OK


def _tiled_windows(x: np.ndarray, k: int, threshold: float, normalize: str = "window"):
    starts = range(0, x.size - k + 1, k)
    if normalize == "record":
        x = preprocess_window(x, threshold)
        X = np.stack([x[s:s + k].reshape(1, k) for s in starts])
    else:
        X = np.stack([preprocess_window(x[s:s + k], threshold).reshape(1, k) for s in starts])
    return X, [s + k // 2 for s in starts]


def cmd_evaluate(args) -> int:
    try:
        w = serialize.load_weights(args.weights)
    except OSError as exc:
        raise UsageError(f"cannot read weights {args.weights}: {exc.strerror}") from None
    has_head = w.dims.num_classes > 0
    if (args.task == "classify") != has_head:
        raise UsageError(f"weights in {args.weights} have a "
                         f"{'classification' if has_head else 'forecasting'} head, "
                         f"not usable for task {args.task!r}")
    if w.dims.m != 1:
        raise UsageError(f"weights expect {w.dims.m} input features; series files carry 1")
    cfg, paths = resolve(args, args.task)
    series_path = _need(paths, "series")
    out = _out_dir(paths)
    t0 = time.perf_counter()
    if args.task == "forecast":
        s = preprocess_forecast(load_csv_series(series_path), cfg.threshold, cfg.peak)
        train_len = cfg.train_len or w.dims.k
        if s.samples.size < train_len:
            raise UsageError(f"series has {s.samples.size} samples, weights need {train_len}")
        if s.samples.size >= train_len + cfg.delay:
            data = make_forecast_pairs(s, cfg.delay, train_len)
            pred = predict_forecast(w, data.inputs)
            final = evaluate_forecast(w, data)
        else:
            pred = predict_forecast(w, s.samples[:train_len].reshape(1, -1))
            final = {}
        with open(os.path.join(out, "predictions.csv"), "w", encoding="utf-8", newline="\n") as fh:
            for i, v in enumerate(pred[0]):
                fh.write(f"{i + cfg.delay},{fmt(v)}\n")
        doc = {"task": "forecast", "weights": os.path.basename(args.weights), "final": final}
    else:
        k = w.dims.k
        s = load_csv_series(series_path)
        if s.samples.size < k:
            raise UsageError(f"series has {s.samples.size} samples, window length is {k}")
        doc = {"task": "classify", "weights": os.path.basename(args.weights), "k": k}
        if paths.get("annotations"):
            a = AnnotatedSeries(s, load_annotations(_need(paths, "annotations")))
            if args.subset == "validation":
                ds = window_dataset(a, k, per_class=cfg.train_per_class + cfg.val_per_class,
                                    threshold=cfg.threshold,
                                    normalize=cfg.normalize).split(cfg.train_per_class)[1]
            else:
                ds = window_dataset(a, k, threshold=cfg.threshold, normalize=cfg.normalize)
            if len(ds) == 0:
                raise UsageError(f"no {args.subset} windows of length {k} in the annotated series")
            X, _ = ds.stacked()
            cm = evaluate_classify(w, ds)
            centres = ds.centres
            doc.update({"final": {"accuracy": cm.accuracy}, "labels": list(LABELS),
                        "confusion_matrix": cm.tolist(), "windows": len(ds)})
        else:
            X, centres = _tiled_windows(s.samples, k, cfg.threshold, cfg.normalize)
            doc["windows"] = len(centres)
        labels = predict_labels(w, X)
        with open(os.path.join(out, "labels.csv"), "w", encoding="utf-8", newline="\n") as fh:
            for c, lab in zip(centres, labels):
                fh.write(f"{c},{LABELS[lab]}\n")
        final = doc.get("final", {})
    serialize.write_json(os.path.join(out, "evaluation.json"), doc)
    _write_meta(out, t0)
    print(_final_line(final) if final else f"wrote predictions to {out}")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def _add_run_flags(p, task: str | None) -> None:
    cls = task == "classify"
    eta_default = "0.01 classify, 0.1 forecast" if task is None else ("0.01" if cls else "0.1")
    p.add_argument("--config", help="key = value settings file (flags override it)")
    p.add_argument("--series", help="series CSV (index,value)")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    if task is None:
        p.add_argument("--task", choices=("forecast", "classify"), help="task (default: forecast)")
    if task != "forecast":
        p.add_argument("--annotations", help="annotation CSV (sample_index,label)")
    p.add_argument("--eta", type=float, help=f"learning rate (default: {eta_default})")
    p.add_argument("--epochs", type=int, help="training epochs (default: 100)")
    p.add_argument("--weight-penalty", dest="weight_penalty", type=float,
                   help="L2 weight penalty (default: 0.01)")
    p.add_argument("--clip", type=float,
                   help="element-wise gradient clip (default: 0.05 classify, none forecast)")
    p.add_argument("--hidden", type=int, help="hidden size n (default: 32 classify, 1 forecast)")
    p.add_argument("--seed", type=int, help="random seed (default: 0)")
    p.add_argument("--init-scale", dest="init_scale", type=float,
                   help="uniform init half-width (default: 0.1)")
    p.add_argument("--bias-value", dest="bias_value", type=float,
                   help="pin the shared bias b (default: drawn from U(0,1))")
    p.add_argument("--model", choices=("dblstm", "lstm"), help="cell type (default: dblstm)")
    p.add_argument("--threshold", type=float, help="wavelet soft threshold (default: 0.04)")
    if task != "classify":
        p.add_argument("--delay", type=int, help="forecast delay in samples (default: 280)")
        p.add_argument("--train-len", dest="train_len", type=int,
                       help="forecast window length (default: the delay)")
        p.add_argument("--peak", type=float, help="forecast target peak magnitude (default: 0.5)")
        p.add_argument("--val-start", dest="val_start", type=int,
                       help="start of the validation pair (default: right after the training span)")
    if task != "forecast":
        p.add_argument("--k", type=int, help="classification window length (default: 180)")
        p.add_argument("--normalize", choices=NORMALIZE_MODES,
                       help="z-score each window or the whole record (default: window)")
        p.add_argument("--train-per-class", dest="train_per_class", type=int,
                       help="training windows per class (default: 200)")
        p.add_argument("--val-per-class", dest="val_per_class", type=int,
                       help="validation windows per class (default: 50)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dblstm", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("synth-ecg", help="write a synthetic ECG series and annotations")
    p.add_argument("--classes", default=",".join(LABELS), help="beat classes (default: N,L,R,A,V)")
    p.add_argument("--beats", type=int, default=10, help="beats per class (default: 10)")
    p.add_argument("--period", type=int, default=280, help="samples per beat slot (default: 280)")
    p.add_argument("--noise", type=float, default=0.0, help="uniform noise amplitude (default: 0)")
    p.add_argument("--jitter", type=float, default=0.0, help="per-beat shape jitter (default: 0)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth_ecg)

    p = sub.add_parser("train-forecast", help="train the forecasting head")
    _add_run_flags(p, "forecast")
    p.add_argument("--bits", type=int, help="quantization bits 1..16 (default: full precision)")
    p.add_argument("--inplace-quant", dest="inplace_quant", action="store_const", const=True,
                   help="update quantized weights directly instead of shadow copies")
    p.set_defaults(func=cmd_train_forecast)

    p = sub.add_parser("train-classify", help="train the beat classifier")
    _add_run_flags(p, "classify")
    p.add_argument("--bits", type=int, help="quantization bits 1..16 (default: full precision)")
    p.add_argument("--inplace-quant", dest="inplace_quant", action="store_const", const=True,
                   help="update quantized weights directly instead of shadow copies")
    p.set_defaults(func=cmd_train_classify)

    p = sub.add_parser("quantize-sweep", help="train once per bit width plus full precision")
    _add_run_flags(p, None)
    p.add_argument("--bits", dest="bits_list", default="1,2,3,4,32",
                   help="bit widths; 0 or 32 mean full precision (default: 1,2,3,4,32)")
    p.set_defaults(func=cmd_quantize_sweep)

    p = sub.add_parser("compare-baseline", help="DB-LSTM against a conventional LSTM")
    _add_run_flags(p, None)
    p.add_argument("--seeds", default="1,2,3,4,5", help="seeds, at least 3 (default: 1,2,3,4,5)")
    p.set_defaults(func=cmd_compare_baseline)

    p = sub.add_parser("evaluate", help="run saved weights on a series")
    p.add_argument("--weights", required=True, help="weights JSON from a training run")
    p.add_argument("--task", required=True, choices=("forecast", "classify"))
    p.add_argument("--series", help="series CSV (index,value)")
    p.add_argument("--annotations", help="annotation CSV; enables the confusion matrix")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    p.add_argument("--config", help="key = value settings file (flags override it)")
    p.add_argument("--delay", type=int, help="forecast delay in samples (default: 280)")
    p.add_argument("--train-len", dest="train_len", type=int,
                   help="forecast window length (default: the weights' k)")
    p.add_argument("--peak", type=float, help="forecast target peak magnitude (default: 0.5)")
    p.add_argument("--threshold", type=float, help="wavelet soft threshold (default: 0.04)")
    p.add_argument("--normalize", choices=NORMALIZE_MODES,
                   help="z-score each window or the whole record (default: window)")
    p.add_argument("--subset", choices=("all", "validation"), default="all",
                   help="annotated windows to score (default: all)")
    p.add_argument("--train-per-class", dest="train_per_class", type=int,
                   help="training windows per class, for --subset validation (default: 200)")
    p.add_argument("--val-per-class", dest="val_per_class", type=int,
                   help="validation windows per class, for --subset validation (default: 50)")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on bad usage
    try:
        # overflow on the way to a divergence is reported through the exit code
        with np.errstate(over="ignore", invalid="ignore"):
            return args.func(args)
    except (UsageError, ParseError, WeightFormatError, ConfigurationError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        # invariant violations surfacing from the library
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
