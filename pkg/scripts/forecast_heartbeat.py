#!/usr/bin/env python3
"""Next-heartbeat forecasting with a one-unit DB-LSTM.

A synthetic normal rhythm is denoised, standardized and scaled into the
cell's output range.  The first beat is the input and the beat one period
later is the target.  The same data then train a conventional LSTM with the
same optimizer settings for comparison.
"""

from dblstm.cell import param_count
from dblstm.ecg import make_forecast_pairs, preprocess_forecast, synth_ecg
from dblstm.train import RunConfig, evaluate_forecast, train_forecast

beats = synth_ecg(["N"], beats_per_class=3, period=280, seed=0)
y = preprocess_forecast(beats.series)
data = make_forecast_pairs(y, delay=280, train_len=280)
print(f"input {data.inputs.shape}, target {data.targets.shape}, delay {data.delay}")

cfg = RunConfig.for_task("forecast")
print(f"eta={cfg.eta} penalty={cfg.weight_penalty} epochs={cfg.epochs} hidden={cfg.hidden}")

w, hist = train_forecast(cfg, data)
print(f"DB-LSTM parameters: {param_count(w.dims)}")
for rec in hist[::20] + [hist[-1]]:
    print(f"  epoch {rec.epoch:3d}  loss {rec.loss:.5f}  nmse {rec.nmse:.4f}  rmse {rec.rmse:.4f}")

lstm_w, lstm_hist = train_forecast(cfg.replace(model="lstm"), data)
print(f"conventional LSTM final loss {lstm_hist[-1].loss:.5f} "
      f"vs DB-LSTM {hist[-1].loss:.5f}")

# Shift everything one beat: the third beat is a target the model never saw.
held_out = make_forecast_pairs(y, delay=280, train_len=280, start=280)
res = evaluate_forecast(w, held_out)
print(f"held-out beat: nmse {res['nmse']:.4f}, surrogate accuracy {res['accuracy']:.1f}%")
