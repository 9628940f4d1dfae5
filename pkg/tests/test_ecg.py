import numpy as np
import pytest

from dblstm.ecg import (
    LABELS,
    AnnotatedSeries,
    ParseError,
    Series,
    dwt_denoise,
    fit_range,
    load_annotated,
    load_annotations,
    load_csv_series,
    make_forecast_pairs,
    preprocess_forecast,
    synth_ecg,
    window_dataset,
    write_annotations,
    write_csv_series,
    zscore,
)


def test_denoise_constant_passthrough():
    x = np.full(200, 0.7)
    np.testing.assert_allclose(dwt_denoise(x), x, atol=1e-10)


def test_denoise_keeps_slow_sinusoid():
    t = np.arange(1024)
    x = np.sin(2 * np.pi * t / 256)
    y = dwt_denoise(x)
    assert y.shape == x.shape
    assert np.corrcoef(x, y)[0, 1] >= 0.999


def test_denoise_reduces_noise():
    rng = np.random.default_rng(0)
    t = np.arange(1024)
    clean = np.sin(2 * np.pi * t / 256)
    noisy = clean + rng.uniform(-0.05, 0.05, size=t.size)
    before = np.sqrt(np.mean((noisy - clean) ** 2))
    after = np.sqrt(np.mean((dwt_denoise(noisy) - clean) ** 2))
    assert after < before


def test_denoise_short_input_and_series_type():
    with pytest.raises(ValueError):
        dwt_denoise(np.zeros(8))
    s = Series(np.linspace(0, 1, 64), 360.0)
    out = dwt_denoise(s)
    assert isinstance(out, Series) and out.sample_rate == 360.0


def test_zscore():
    np.testing.assert_allclose(zscore([1.0, 2.0, 3.0]), [-1.224744871391589, 0.0, 1.224744871391589],
                               atol=1e-15)
    assert np.all(zscore(np.full(5, 3.0)) == 0)
    z = zscore(np.random.default_rng(1).normal(3, 7, size=500))
    assert abs(z.mean()) < 1e-10 and abs(z.std() - 1) < 1e-10


def test_fit_range():
    y = fit_range([-2.0, 1.0, 0.5], peak=0.5)
    np.testing.assert_allclose(y, [-0.5, 0.25, 0.125])
    assert np.all(fit_range(np.zeros(3)) == 0)


def test_preprocess_forecast_bounded():
    a = synth_ecg(classes=["N"], beats_per_class=4)
    y = preprocess_forecast(a.series)
    assert np.abs(y.samples).max() == pytest.approx(0.5)


def test_forecast_pairs():
    d = make_forecast_pairs(np.array([10.0, 20, 30, 40]), delay=1, train_len=3)
    assert d.inputs.tolist() == [[10, 20, 30]] and d.targets.tolist() == [[20, 30, 40]]
    x = np.arange(600.0)
    d = make_forecast_pairs(x, delay=280, train_len=280)
    assert d.targets[0, -1] == 559.0 and d.k == 280
    d = make_forecast_pairs(np.arange(1000.0), delay=460, train_len=460)
    assert d.targets[0, 0] == 460.0
    with pytest.raises(ValueError):
        make_forecast_pairs(x, delay=300, train_len=301)


def test_forecast_pairs_offset():
    d = make_forecast_pairs(np.arange(900.0), delay=280, train_len=280, start=280)
    assert d.inputs[0, 0] == 280.0 and d.targets[0, -1] == 839.0
    with pytest.raises(ValueError):
        make_forecast_pairs(np.arange(800.0), delay=280, train_len=280, start=280)


def test_window_centering():
    x = np.arange(400.0)
    a = AnnotatedSeries(Series(x), [(100, "N")])
    ds = window_dataset(a, k=180, denoise=False)
    X, _ = ds.stacked()
    # z-score is affine, so recover the raw index range from the ramp
    raw = X[0, 0] * x[10:190].std() + x[10:190].mean()
    np.testing.assert_allclose(raw, x[10:190], atol=1e-9)


def test_window_skips_edges_and_caps():
    a = synth_ecg(beats_per_class=3, period=200)
    ds = window_dataset(a, k=180, per_class=2)
    assert len(ds) <= 10 and all(v == 2 for v in ds.counts.values())
    edge = AnnotatedSeries(Series(np.zeros(300)), [(20, "N"), (150, "N")])
    ds = window_dataset(edge, k=180, denoise=False)
    assert len(ds) == 1 and ds.skipped == 1


def test_record_normalization():
    x = np.arange(400.0)
    a = AnnotatedSeries(Series(x), [(100, "N"), (250, "V")])
    ds = window_dataset(a, k=40, denoise=False, normalize="record")
    X, _ = ds.stacked()
    z = (x - x.mean()) / x.std()
    np.testing.assert_allclose(X[1, 0], z[230:270], atol=1e-12)
    # per-window mode standardizes each window on its own
    Xw, _ = window_dataset(a, k=40, denoise=False).stacked()
    np.testing.assert_allclose(Xw[0, 0], Xw[1, 0], atol=1e-12)
    with pytest.raises(ValueError):
        window_dataset(a, k=40, normalize="global")


def test_balanced_windows_from_synth():
    a = synth_ecg(beats_per_class=6, period=300)
    ds = window_dataset(a, k=180, per_class=4)
    assert ds.counts == {c: 4 for c in LABELS}
    train, val = ds.split(3)
    assert train.counts == {c: 3 for c in LABELS} and val.counts == {c: 1 for c in LABELS}


def test_synth_single_peak_per_period():
    a = synth_ecg(classes=["N"], beats_per_class=1, period=280)
    x = a.series.samples
    r = x.max()
    peaks = [i for i in range(1, x.size - 1) if x[i] > x[i - 1] and x[i] >= x[i + 1] and x[i] > 0.8 * r]
    assert peaks == [a.annotations[0][0]]


def test_synth_deterministic_and_counts():
    a = synth_ecg(seed=3, noise_amp=0.1, jitter=0.2)
    b = synth_ecg(seed=3, noise_amp=0.1, jitter=0.2)
    assert np.array_equal(a.series.samples, b.series.samples)
    assert len(a.annotations) == 50
    assert [lab for _, lab in a.annotations] == [c for c in LABELS for _ in range(10)]


def test_synth_rejects_short_period():
    with pytest.raises(ValueError):
        synth_ecg(period=10)


def test_csv_minimal_files(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("0,0.5\n1,0.6\n")
    assert load_csv_series(p).samples.tolist() == [0.5, 0.6]
    q = tmp_path / "a.csv"
    q.write_text("100,N\n350,V\n")
    assert load_annotations(q) == [(100, "N"), (350, "V")]


def test_csv_errors_carry_line_numbers(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("0,0.5\n1,abc\n")
    with pytest.raises(ParseError, match=":2:"):
        load_csv_series(p)
    q = tmp_path / "a.csv"
    q.write_text("100,N\n200,X\n")
    with pytest.raises(ParseError, match=":2:.*'X'"):
        load_annotations(q)


def test_round_trip(tmp_path):
    a = synth_ecg(beats_per_class=2, noise_amp=0.05, seed=1)
    write_csv_series(tmp_path / "s.csv", a.series)
    write_annotations(tmp_path / "a.csv", a.annotations)
    b = load_annotated(tmp_path / "s.csv", tmp_path / "a.csv")
    assert np.array_equal(a.series.samples, b.series.samples)
    assert a.annotations == b.annotations
