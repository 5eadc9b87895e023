"""Features for the non-EEG modalities.

Eye movement: 33 values per window computed from an annotated tracking
stream (layout in ``EYE_FEATURE_NAMES``). Peripheral signals: six summary
statistics for each of 8 channels per window.
"""
import csv
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    MissingEventAnnotations,
    NonMonotonicTimestamps,
    RowCountMismatch,
    SignalTooShort,
    ValidationError,
    WrongChannelCount,
)
from .preproc import DE_FLOOR, VARIANCE_FLOOR, FeatureTensor, window_length

EYE_COLUMNS = (
    "timestamp_s", "pupil_x", "pupil_y", "gaze_x", "gaze_y", "event_type", "event_start_s", "event_end_s",
)
EVENT_KINDS = ("fixation", "blink", "saccade")

# (low, high] in Hz for the pupil/gaze entropy slots
EYE_BANDS = (("vlow", 0.0, 0.5), ("low", 0.5, 2.0), ("high", 2.0, math.inf))
_EYE_TRACES = ("pupil_x", "pupil_y", "gaze_x", "gaze_y")
_STATS4 = ("mean", "std", "max", "min")

EYE_FEATURE_NAMES = tuple(
    [f"de_{trace}_{band}" for trace in _EYE_TRACES for band, _, _ in EYE_BANDS]
    + [f"fixation_duration_{s}" for s in _STATS4]
    + [f"blink_duration_{s}" for s in _STATS4]
    + [f"saccade_duration_{s}" for s in _STATS4]
    + [f"saccade_amplitude_{s}" for s in _STATS4]
    + ["blink_frequency", "saccade_frequency"]
    + ["gaze_std_x", "gaze_std_y", "gaze_mean_radius"]
)
assert len(EYE_FEATURE_NAMES) == 33

PERIPHERAL_STATS = ("max", "min", "mean", "std", "var", "sumsq")
PERIPHERAL_CHANNELS = 8


@dataclass(frozen=True)
class EyeEvent:
    kind: str
    start: float
    end: float

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class EyeStream:
    """Eye-tracking samples plus event annotations; times in seconds from trial onset."""

    timestamps: np.ndarray
    pupil_x: np.ndarray
    pupil_y: np.ndarray
    gaze_x: np.ndarray
    gaze_y: np.ndarray
    events: tuple

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=np.float64)
        if t.size < 2:
            raise SignalTooShort("eye stream needs at least two samples")
        bad = np.flatnonzero(np.diff(t) <= 0)
        if bad.size:
            i = int(bad[0]) + 1
            raise NonMonotonicTimestamps(f"timestamp at row {i} ({t[i]}) does not increase")
        for e in self.events:
            if e.kind not in EVENT_KINDS:
                raise ValidationError(f"unknown eye event type {e.kind!r}")
            if not e.end >= e.start:
                raise ValidationError(f"{e.kind} event ends ({e.end}) before it starts ({e.start})")

    @property
    def sample_rate(self) -> float:
        return 1.0 / float(np.median(np.diff(self.timestamps)))

    @property
    def duration(self) -> float:
        return float(self.timestamps[-1]) + 1.0 / self.sample_rate


def read_eye_stream(path) -> EyeStream:
    """Parse the eye-movement CSV.

    Rows with an empty ``event_type`` are samples; rows with a type are event
    annotations and only their ``event_start_s``/``event_end_s`` are read.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in EYE_COLUMNS if c not in header]
        if any(c.startswith("event") for c in missing):
            raise MissingEventAnnotations(f"{path}: missing event columns {missing}")
        if missing:
            raise ValidationError(f"{path}: missing columns {missing}")
        samples, events = [], []
        for row in reader:
            kind = (row["event_type"] or "").strip()
            if kind:
                events.append(EyeEvent(kind, float(row["event_start_s"]), float(row["event_end_s"])))
            else:
                samples.append([float(row[c]) for c in EYE_COLUMNS[:5]])
    if not events:
        raise MissingEventAnnotations(f"{path}: stream carries no fixation/blink/saccade annotations")
    arr = np.array(samples, dtype=np.float64).reshape(-1, 5)
    if not np.isfinite(arr).all():
        raise ValidationError(f"{path}: non-finite eye sample")
    return EyeStream(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4], tuple(events))


def write_eye_stream(path, stream: EyeStream):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EYE_COLUMNS)
        cols = (stream.timestamps, stream.pupil_x, stream.pupil_y, stream.gaze_x, stream.gaze_y)
        for vals in zip(*cols):
            w.writerow([repr(float(v)) for v in vals] + ["", "", ""])
        for e in stream.events:
            w.writerow([repr(float(e.start)), "", "", "", "", e.kind, repr(float(e.start)), repr(float(e.end))])


def _band_entropies(x, rate):
    """DE of the variance falling in each ``EYE_BANDS`` interval (periodogram split)."""
    m = x.size
    if m < 2:
        return [DE_FLOOR] * len(EYE_BANDS)
    spec = np.abs(np.fft.rfft(x - x.mean())) ** 2
    weight = np.full(spec.size, 2.0)
    weight[0] = 1.0
    if m % 2 == 0:
        weight[-1] = 1.0
    power = weight * spec / m**2  # sums to the population variance
    freqs = np.fft.rfftfreq(m, 1.0 / rate)
    out = []
    for _, lo, hi in EYE_BANDS:
        var = power[(freqs > lo) & (freqs <= hi)].sum()
        out.append(0.5 * math.log(2 * math.pi * math.e * max(var, VARIANCE_FLOOR)))
    return out


def _stats4(values):
    # zero-event convention: all statistics are 0
    if len(values) == 0:
        return [0.0, 0.0, 0.0, 0.0]
    v = np.asarray(values, dtype=np.float64)
    return [float(v.mean()), float(v.std()), float(v.max()), float(v.min())]


def eye_features(stream: EyeStream, window_seconds=4.0, n_windows=None, origin=()) -> FeatureTensor:
    """33 features per non-overlapping window on the trial-onset grid.

    Events are assigned to the window containing their start time. Pass the
    EEG window count as ``n_windows`` to force row alignment with EEG tensors.
    """
    if n_windows is None:
        n_windows = int(math.floor(stream.duration / window_seconds + 1e-9))
    if n_windows < 1:
        raise SignalTooShort(f"eye stream of {stream.duration:.3f} s is shorter than one {window_seconds} s window")
    rate = stream.sample_rate
    t = stream.timestamps
    rows = []
    for k in range(n_windows):
        lo, hi = k * window_seconds, (k + 1) * window_seconds
        idx = (t >= lo) & (t < hi)
        row = []
        for trace in _EYE_TRACES:
            row += _band_entropies(getattr(stream, trace)[idx], rate)
        in_win = [e for e in stream.events if lo <= e.start < hi]
        by_kind = {kind: [e for e in in_win if e.kind == kind] for kind in EVENT_KINDS}
        row += _stats4([e.duration for e in by_kind["fixation"]])
        row += _stats4([e.duration for e in by_kind["blink"]])
        row += _stats4([e.duration for e in by_kind["saccade"]])
        amps = [
            math.hypot(
                np.interp(e.end, t, stream.gaze_x) - np.interp(e.start, t, stream.gaze_x),
                np.interp(e.end, t, stream.gaze_y) - np.interp(e.start, t, stream.gaze_y),
            )
            for e in by_kind["saccade"]
        ]
        row += _stats4(amps)
        row += [len(by_kind["blink"]) / window_seconds, len(by_kind["saccade"]) / window_seconds]
        gx, gy = stream.gaze_x[idx], stream.gaze_y[idx]
        if gx.size:
            radius = float(np.hypot(gx - gx.mean(), gy - gy.mean()).mean())
            row += [float(gx.std()), float(gy.std()), radius]
        else:
            row += [0.0, 0.0, 0.0]
        rows.append(row)
    return FeatureTensor(np.array(rows), window_seconds, tuple(origin), EYE_FEATURE_NAMES)


def peripheral_features(signal, rate, window_seconds=1.0, channel_names=None, origin=(), backend=None) -> FeatureTensor:
    """Per window: max, min, mean, std, var, sum of squares for each of 8 channels.

    Columns are channel-major, statistic-minor (48 values). Population variance.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != PERIPHERAL_CHANNELS:
        raise WrongChannelCount(f"peripheral features need {PERIPHERAL_CHANNELS} channels, got shape {x.shape}")
    win = window_length(window_seconds, rate)
    if x.shape[1] < win:
        raise SignalTooShort(f"{x.shape[1]} samples is shorter than one {window_seconds} s window")
    stats = kernels.window_stats(x, win, backend=backend)
    names = channel_names or [f"pps{i}" for i in range(PERIPHERAL_CHANNELS)]
    feature_names = [f"{c}_{s}" for c in names for s in PERIPHERAL_STATS]
    return FeatureTensor(stats.reshape(stats.shape[0], -1), window_seconds, tuple(origin), feature_names)


def precomputed_eye_passthrough(features, expected_rows, window_seconds=4.0, feature_names=None, origin=()) -> FeatureTensor:
    """Validate and wrap shipped eye features without changing any value."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2:
        raise ValidationError(f"precomputed features must be 2-D, got shape {f.shape}")
    if f.shape[0] != expected_rows:
        raise RowCountMismatch(f"precomputed eye features have {f.shape[0]} rows, EEG has {expected_rows} windows")
    bad = np.argwhere(~np.isfinite(f))
    if bad.size:
        r, c = (int(i) for i in bad[0])
        raise ValidationError(f"non-finite precomputed eye feature at row {r}, column {c}")
    if feature_names is None:
        feature_names = EYE_FEATURE_NAMES if f.shape[1] == 33 else [f"eye{i}" for i in range(f.shape[1])]
    return FeatureTensor(f.copy(), window_seconds, tuple(origin), feature_names)
