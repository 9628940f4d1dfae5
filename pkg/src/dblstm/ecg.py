"""Signal preprocessing, dataset construction, synthetic ECG and CSV I/O."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import pywt

LABELS = ("N", "L", "R", "A", "V")
LABEL_INDEX = {s: j for j, s in enumerate(LABELS)}


class ParseError(ValueError):
    """A data file line could not be parsed."""

    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


@dataclass
class Series:
    samples: np.ndarray
    sample_rate: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.samples.size == 0:
            raise ValueError("series is empty")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("series contains non-finite samples")

    def __len__(self) -> int:
        return self.samples.size


@dataclass
class AnnotatedSeries:
    series: Series
    annotations: list[tuple[int, str]]

    def __post_init__(self):
        last = -1
        for idx, label in self.annotations:
            if label not in LABEL_INDEX:
                raise ValueError(f"unknown beat label {label!r}")
            if idx <= last or idx >= len(self.series):
                raise ValueError(f"annotation index {idx} out of order or out of range")
            last = idx


@dataclass
class ForecastDataset:
    inputs: np.ndarray  # (1, k)
    targets: np.ndarray  # (1, k)
    delay: int

    @property
    def k(self) -> int:
        return self.inputs.shape[1]


@dataclass
class ClassifyDataset:
    windows: list[tuple[np.ndarray, int]]  # ((1, k) window, class index)
    k: int
    skipped: int = 0
    counts: dict[str, int] = field(default_factory=dict)
    centres: list[int] = field(default_factory=list)  # annotation index per window

    def __len__(self) -> int:
        return len(self.windows)

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """Windows as a ``(B, 1, k)`` array and labels as ``(B,)``."""
        if not self.windows:
            return np.zeros((0, 1, self.k)), np.zeros(0, dtype=int)
        X = np.stack([w for w, _ in self.windows])
        y = np.array([lab for _, lab in self.windows], dtype=int)
        return X, y

    def split(self, n_train_per_class: int) -> tuple[ClassifyDataset, ClassifyDataset]:
        """First ``n_train_per_class`` windows of each label train, the rest validate."""
        seen: Counter = Counter()
        parts = {True: ([], []), False: ([], [])}
        centres = self.centres or [None] * len(self.windows)
        for (w, lab), c in zip(self.windows, centres):
            wins, cs = parts[seen[lab] < n_train_per_class]
            wins.append((w, lab))
            cs.append(c)
            seen[lab] += 1

        def make(wins, cs):
            return ClassifyDataset(wins, self.k, counts=_label_counts(wins),
                                   centres=cs if self.centres else [])
        return make(*parts[True]), make(*parts[False])


def _label_counts(windows) -> dict[str, int]:
    c = Counter(LABELS[lab] for _, lab in windows)
    return {s: c[s] for s in LABELS if c[s]}


def _samples(s) -> np.ndarray:
    if isinstance(s, Series):
        return s.samples
    return np.asarray(s, dtype=np.float64).reshape(-1)


def _like(s, values):
    if isinstance(s, Series):
        return Series(values, s.sample_rate)
    return values


def dwt_denoise(s, threshold: float = 0.04, wavelet: str = "db4", level: int = 4,
                mode: str = "soft"):
    """Soft-threshold the detail coefficients of a multilevel DWT.

    The decomposition depth is capped by what the signal length allows for
    the chosen wavelet.  Output length equals input length.
    """
    x = _samples(s)
    if x.size < 16:
        raise ValueError(f"dwt_denoise needs at least 16 samples, got {x.size}")
    w = pywt.Wavelet(wavelet)
    depth = max(1, min(level, pywt.dwt_max_level(x.size, w.dec_len)))
    coeffs = pywt.wavedec(x, w, mode="symmetric", level=depth)
    coeffs[1:] = [pywt.threshold(c, threshold, mode=mode) for c in coeffs[1:]]
    y = pywt.waverec(coeffs, w, mode="symmetric")[: x.size]
    return _like(s, y)


def zscore(s):
    """Standardize with the population standard deviation; constant input -> zeros."""
    x = _samples(s)
    sd = x.std()
    if sd == 0:
        return _like(s, np.zeros_like(x))
    return _like(s, (x - x.mean()) / sd)


def fit_range(s, peak: float = 0.5):
    """Rescale so the largest magnitude equals ``peak``.

    The forecasting head emits ``h_t`` directly and ``|h_t| < 1``, so targets
    must sit inside that range; z-scored ECG does not.
    """
    x = _samples(s)
    top = np.abs(x).max()
    if top == 0:
        return _like(s, x.copy())
    return _like(s, x * (peak / top))


def preprocess_forecast(s, threshold: float = 0.04, peak: float | None = 0.5,
                        denoise: bool = True):
    """Denoise, z-score, then fit into the cell's output range (``peak=None`` skips)."""
    y = dwt_denoise(s, threshold) if denoise else s
    y = zscore(y)
    if peak is not None:
        y = fit_range(y, peak)
    return y


def make_forecast_pairs(s, delay: int, train_len: int, start: int = 0) -> ForecastDataset:
    """Input ``s[start:start+train_len]`` against the same span ``delay`` later."""
    x = _samples(s)
    if delay < 0 or train_len < 1 or start < 0:
        raise ValueError("delay and start must be >= 0 and train_len >= 1")
    if start + train_len + delay > x.size:
        raise ValueError(f"need {start + train_len + delay} samples, series has {x.size}")
    return ForecastDataset(
        inputs=x[start:start + train_len].reshape(1, -1).copy(),
        targets=x[start + delay:start + delay + train_len].reshape(1, -1).copy(),
        delay=delay,
    )


def preprocess_window(x: np.ndarray, threshold: float = 0.04, denoise: bool = True) -> np.ndarray:
    if denoise:
        x = dwt_denoise(x, threshold)
    return zscore(x)


NORMALIZE_MODES = ("window", "record")


def window_dataset(a: AnnotatedSeries, k: int = 180, per_class: int | None = None,
                   threshold: float = 0.04, denoise: bool = True,
                   normalize: str = "window") -> ClassifyDataset:
    """Beat-centred windows, each denoised and z-scored on its own.

    ``normalize="record"`` instead denoises and z-scores the whole series once
    and cuts windows from the result.  Windows that would leave the series
    are skipped and counted.
    """
    if normalize not in NORMALIZE_MODES:
        raise ValueError(f"normalize must be one of {NORMALIZE_MODES}, got {normalize!r}")
    x = a.series.samples
    if normalize == "record":
        x = preprocess_window(x, threshold, denoise)
    before, after = k // 2, k - k // 2
    taken: Counter = Counter()
    windows = []
    centres = []
    skipped = 0
    for idx, label in a.annotations:
        if per_class is not None and taken[label] >= per_class:
            continue
        lo, hi = idx - before, idx + after
        if lo < 0 or hi > x.size:
            skipped += 1
            continue
        w = x[lo:hi] if normalize == "record" else preprocess_window(x[lo:hi], threshold, denoise)
        windows.append((w.reshape(1, k), LABEL_INDEX[label]))
        centres.append(idx)
        taken[label] += 1
    return ClassifyDataset(windows, k, skipped=skipped, counts=_label_counts(windows),
                           centres=centres)


# Per-class beat shapes: (amplitude, centre, width) for the P, Q, R, S, T bumps,
# centres and widths in fractions of the period, centres relative to the R peak.
# Some classes repurpose a slot (RBBB's "S" is the terminal R').
_MORPHOLOGY = {
    "N": [(0.15, -0.20, 0.025), (-0.12, -0.035, 0.009), (1.00, 0.0, 0.011),
          (-0.25, 0.035, 0.009), (0.30, 0.26, 0.045)],
    "L": [(0.15, -0.20, 0.025), (-0.05, -0.045, 0.010), (0.85, 0.0, 0.026),
          (0.35, 0.050, 0.028), (-0.30, 0.28, 0.050)],
    "R": [(0.15, -0.20, 0.025), (-0.10, -0.030, 0.009), (0.90, 0.0, 0.011),
          (0.55, 0.075, 0.014), (0.25, 0.27, 0.045)],
    "A": [(-0.10, -0.13, 0.020), (-0.12, -0.035, 0.009), (0.95, 0.0, 0.011),
          (-0.25, 0.035, 0.009), (0.25, 0.24, 0.045)],
    "V": [(0.00, -0.20, 0.025), (-0.20, -0.050, 0.020), (1.20, 0.0, 0.030),
          (-0.50, 0.070, 0.030), (-0.45, 0.30, 0.060)],
}
# premature classes fire earlier within their slot
_ADVANCE = {"N": 0.0, "L": 0.0, "R": 0.0, "A": 0.15, "V": 0.15}


def synth_ecg(classes=LABELS, beats_per_class: int = 10, period: int = 280,
              noise_amp: float = 0.0, seed: int = 0, jitter: float = 0.0,
              sample_rate: float = 360.0) -> AnnotatedSeries:
    """Five-Gaussian beats laid out class by class, one beat per ``period`` slot.

    ``jitter`` scales seeded per-beat perturbations of the non-R bumps
    (amplitude and width) so that beats of one class are not copies; the R
    peak stays put so annotations mark it exactly.  ``noise_amp`` adds
    uniform noise in ``[-noise_amp, noise_amp]``.
    """
    if period < 40:
        raise ValueError(f"period must be >= 40 samples, got {period}")
    classes = list(classes)
    for c in classes:
        if c not in _MORPHOLOGY:
            raise ValueError(f"unknown beat label {c!r}")
    rng = np.random.default_rng(seed)
    labels = [c for c in classes for _ in range(beats_per_class)]
    n = len(labels) * period
    x = np.zeros(n)
    annotations = []
    span = np.arange(-period, period + 1)
    for b, label in enumerate(labels):
        r_idx = b * period + period // 2 - int(round(_ADVANCE[label] * period))
        pert = rng.uniform(-1.0, 1.0, size=(5, 2)) * jitter
        beat = np.zeros(span.size)
        for slot, (amp, mu, width) in enumerate(_MORPHOLOGY[label]):
            if slot != 2:
                amp = amp * (1.0 + pert[slot, 0])
                width = width * (1.0 + 0.5 * pert[slot, 1])
            beat += amp * np.exp(-0.5 * ((span - mu * period) / (width * period)) ** 2)
        lo, hi = max(0, r_idx - period), min(n, r_idx + period + 1)
        x[lo:hi] += beat[lo - (r_idx - period): hi - (r_idx - period)]
        annotations.append((r_idx, label))
    if noise_amp > 0:
        x += rng.uniform(-noise_amp, noise_amp, size=n)
    return AnnotatedSeries(Series(x, sample_rate), annotations)


def load_csv_series(path, sample_rate: float = 0.0) -> Series:
    """Read ``index,value`` lines (no header)."""
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ParseError(path, lineno, f"expected 'index,value', got {line!r}")
            try:
                idx = int(parts[0])
                val = float(parts[1])
            except ValueError:
                raise ParseError(path, lineno, f"malformed record {line!r}") from None
            if idx < 0 or not np.isfinite(val):
                raise ParseError(path, lineno, f"bad index or value in {line!r}")
            values.append(val)
    if not values:
        raise ParseError(path, 0, "no samples")
    return Series(np.array(values), sample_rate)


def load_annotations(path) -> list[tuple[int, str]]:
    """Read ``sample_index,label`` lines with labels from N, L, R, A, V."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ParseError(path, lineno, f"expected 'sample_index,label', got {line!r}")
            try:
                idx = int(parts[0])
            except ValueError:
                raise ParseError(path, lineno, f"malformed sample index {parts[0]!r}") from None
            label = parts[1].strip()
            if label not in LABEL_INDEX:
                raise ParseError(path, lineno, f"unknown label {label!r}")
            out.append((idx, label))
    return out


def write_csv_series(path, s) -> None:
    x = _samples(s)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, v in enumerate(x):
            fh.write(f"{i},{float(v)!r}\n")


def write_annotations(path, annotations) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for idx, label in annotations:
            fh.write(f"{int(idx)},{label}\n")


def load_annotated(series_path, annotations_path, sample_rate: float = 0.0) -> AnnotatedSeries:
    return AnnotatedSeries(load_csv_series(series_path, sample_rate),
                           load_annotations(annotations_path))
