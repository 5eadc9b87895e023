"""EEG feature chain.

baseline removal -> 0.3-50 Hz zero-phase band-pass -> PCA artifact
suppression -> per-band differential entropy over non-overlapping windows ->
local-level (Kalman/RTS) smoothing of every feature trajectory.
"""
import functools
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import signal as sps
from scipy.stats import kurtosis

from . import kernels
from .errors import ChannelMismatch, DegenerateCovariance, InvalidBandEdges, SignalTooShort, ValidationError
from .signal_model import Trial

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-12
DE_FLOOR = 0.5 * math.log(2 * math.pi * math.e * VARIANCE_FLOOR)


@dataclass(frozen=True)
class FrequencyBand:
    name: str
    low_hz: float
    high_hz: float

    def __post_init__(self):
        if not 0 < self.low_hz < self.high_hz:
            raise InvalidBandEdges(f"band {self.name}: need 0 < low < high, got {self.low_hz}-{self.high_hz}")


DEFAULT_BANDS = (
    FrequencyBand("delta", 1.0, 4.0),
    FrequencyBand("theta", 4.0, 8.0),
    FrequencyBand("alpha", 8.0, 14.0),
    FrequencyBand("beta", 14.0, 31.0),
    FrequencyBand("gamma", 31.0, 50.0),
)


@dataclass(frozen=True)
class LdsConfig:
    process_var_ratio: float = 0.1
    iterations: int = 1  # 0 disables smoothing


@dataclass(frozen=True)
class PreprocConfig:
    bandpass: tuple = (0.3, 50.0)
    filter_order: int = 4
    bands: tuple = DEFAULT_BANDS
    window_seconds: float = 4.0
    pca_kurtosis_threshold: float = 5.0
    pca_scope: str = "trial"
    lds: LdsConfig = field(default_factory=LdsConfig)

    def __post_init__(self):
        low, high = self.bandpass
        if not 0 < low < high:
            raise InvalidBandEdges(f"bandpass edges must satisfy 0 < low < high, got {self.bandpass}")
        if self.window_seconds <= 0:
            raise ValidationError("window_seconds must be positive")
        if self.pca_scope not in ("trial", "session"):
            raise ValidationError(f"pca_scope must be 'trial' or 'session', got {self.pca_scope!r}")
        if self.lds.iterations < 0:
            raise ValidationError("lds.iterations must be >= 0")
        ordered = sorted(self.bands, key=lambda b: b.low_hz)
        for a, b in zip(ordered, ordered[1:]):
            if b.low_hz < a.high_hz:
                raise InvalidBandEdges(f"bands {a.name} and {b.name} overlap")
        for b in self.bands:
            if b.low_hz < low or b.high_hz > high:
                raise InvalidBandEdges(f"band {b.name} lies outside the band-pass range {self.bandpass}")

    def window_samples(self, rate) -> int:
        return window_length(self.window_seconds, rate)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bandpass"] = list(self.bandpass)
        d["bands"] = [asdict(b) for b in self.bands]
        return d

    @classmethod
    def from_dict(cls, d) -> "PreprocConfig":
        d = dict(d)
        if "bandpass" in d:
            d["bandpass"] = tuple(d["bandpass"])
        if "bands" in d:
            d["bands"] = tuple(FrequencyBand(**b) for b in d["bands"])
        if "lds" in d:
            d["lds"] = LdsConfig(**d["lds"])
        return cls(**d)


@dataclass
class FeatureTensor:
    values: np.ndarray  # (windows, feature_dim)
    window_seconds: float
    origin: tuple  # (subject, session, trial, modality)
    feature_names: tuple
    floored: Optional[np.ndarray] = None  # (windows, feature_dim) bool, zero-variance windows

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.feature_names = tuple(self.feature_names)
        if self.values.ndim != 2:
            raise ValueError(f"feature values must be 2-D, got shape {self.values.shape}")
        if self.values.shape[1] != len(self.feature_names):
            raise ValueError(f"{self.values.shape[1]} feature columns but {len(self.feature_names)} names")
        if not np.isfinite(self.values).all():
            raise ValueError(f"non-finite feature value in {self.origin}")
        if self.floored is None:
            self.floored = np.zeros(self.values.shape, dtype=bool)

    @property
    def n_windows(self) -> int:
        return self.values.shape[0]


def window_length(window_seconds, rate) -> int:
    n = window_seconds * rate
    if n < 1 or abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ValidationError(f"window of {window_seconds} s at {rate} Hz is not a whole number of samples")
    return int(round(n))


# -- stages --------------------------------------------------------------------

def remove_baseline(trial: Trial, modality="EEG") -> Trial:
    """Subtract each channel's baseline-segment mean from that channel."""
    if modality not in trial.baseline:
        log.info("trial %s: no %s baseline segment, baseline removal skipped", trial.trial_id, modality)
        return trial
    sig = trial.signals[modality]
    base = trial.baseline[modality]
    if base.shape[0] != sig.shape[0]:
        raise ChannelMismatch(f"baseline has {base.shape[0]} channels, signal has {sig.shape[0]}")
    return trial.replace_signal(modality, sig - base.mean(axis=1, keepdims=True))


@functools.lru_cache(maxsize=256)
def _design(low, high, rate, order):
    sos = sps.butter(order, [low, high], btype="bandpass", fs=rate, output="sos")
    sos.flags.writeable = False
    return sos


def _band_sos(low, high, rate, order):
    nyq = rate / 2.0
    if not 0 < low < high < nyq:
        raise InvalidBandEdges(f"need 0 < low < high < Nyquist ({nyq} Hz), got {low}-{high} Hz")
    return _design(float(low), float(high), float(rate), int(order)).copy()


def _padlen(sos):
    # scipy's default for sosfiltfilt: three times the effective filter length
    n_zero = min((sos[:, 2] == 0).sum(), (sos[:, 5] == 0).sum())
    return 3 * (2 * len(sos) + 1 - n_zero)


def bandpass(signal, low, high, rate, order=4):
    """Zero-phase Butterworth band-pass along the last axis.

    The squared magnitude of an order-``order`` design is applied (forward then
    backward pass), with even (mirror) padding of three filter lengths. Odd
    padding reflects about the first sample, which for noise is a level step
    of ``2 * x[0]`` that the 0.3 Hz high-pass section rings on for seconds.
    """
    x = np.asarray(signal, dtype=np.float64)
    sos = _band_sos(low, high, rate, order)
    pad = _padlen(sos)
    if x.shape[-1] <= pad:
        raise SignalTooShort(f"{x.shape[-1]} samples; band-pass needs more than {pad}")
    return sps.sosfiltfilt(sos, x, axis=-1, padtype="even", padlen=pad)


@dataclass(frozen=True)
class PcaReport:
    removed: tuple
    kurtosis: tuple
    eigenvalues: tuple


def pca_suppress(signal, kurtosis_threshold=5.0):
    """Zero principal components whose scores have excess kurtosis above the threshold.

    Returns ``(cleaned, report)``. Components are ordered by descending
    eigenvalue in the report.
    """
    x = np.asarray(signal, dtype=np.float64)
    n_ch, n_s = x.shape
    if n_s <= n_ch:
        raise SignalTooShort(f"PCA needs more samples ({n_s}) than channels ({n_ch})")
    mean = x.mean(axis=1, keepdims=True)
    xc = x - mean
    cov = xc @ xc.T / n_s
    w, v = np.linalg.eigh(cov)
    w, v = w[::-1], v[:, ::-1]
    if not w[0] > 0:
        raise DegenerateCovariance("channel covariance has rank 0")
    scores = v.T @ xc
    live = w > w[0] * 1e-12
    k = np.full(n_ch, np.nan)
    k[live] = kurtosis(scores[live], axis=1, fisher=True, bias=True)
    removed = np.flatnonzero(live & (k > kurtosis_threshold))
    if removed.size:
        scores[removed] = 0.0
        log.debug("PCA removed components %s (kurtosis %s)", removed.tolist(), k[removed].round(2).tolist())
    cleaned = v @ scores + mean
    return cleaned, PcaReport(tuple(int(i) for i in removed), tuple(float(a) for a in k), tuple(float(a) for a in w))


def de_features(signal, bands, window_seconds, rate, order=4, channel_names=None, origin=()):
    """Differential entropy per non-overlapping window, channel and band.

    ``bands=None`` computes one broadband value per channel without filtering.
    Columns are channel-major then band. Trailing partial windows are dropped.
    """
    x = np.asarray(signal, dtype=np.float64)
    n_ch, n_s = x.shape
    win = window_length(window_seconds, rate)
    n_win = n_s // win
    if n_win < 1:
        raise SignalTooShort(f"{n_s} samples is shorter than one {window_seconds} s window")
    blocks = x[:, : n_win * win].reshape(n_ch, n_win, win).transpose(1, 0, 2)
    band_list = [None] if bands is None else list(bands)
    variances = np.empty((n_win, n_ch, len(band_list)))
    for j, band in enumerate(band_list):
        filtered = blocks if band is None else bandpass(blocks, band.low_hz, band.high_hz, rate, order)
        variances[:, :, j] = filtered.var(axis=2)
    floored = variances < VARIANCE_FLOOR
    if floored.any():
        log.warning("%s: %d zero-variance window(s) floored at %g", origin or "signal", int(floored.sum()), VARIANCE_FLOOR)
    de = 0.5 * np.log(2 * np.pi * np.e * np.maximum(variances, VARIANCE_FLOOR))
    names = channel_names or [f"ch{i}" for i in range(n_ch)]
    band_names = ["broadband"] if bands is None else [b.name for b in band_list]
    feature_names = [f"{c}_{b}" for c in names for b in band_names]
    return FeatureTensor(
        values=de.reshape(n_win, -1),
        window_seconds=window_seconds,
        origin=tuple(origin),
        feature_names=feature_names,
        floored=floored.reshape(n_win, -1),
    )


def lds_smooth_matrix(values, config: LdsConfig = LdsConfig(), backend=None):
    """Smooth every column of a (time, features) array independently."""
    y = np.asarray(values, dtype=np.float64)
    if y.shape[0] < 2:
        return y.copy()
    for _ in range(config.iterations):
        obs_var = np.diff(y, axis=0).var(axis=0) / 2.0
        y = kernels.local_level_smooth(y, obs_var, config.process_var_ratio * obs_var, backend=backend)
    return y


def lds_smooth(series, config: LdsConfig = LdsConfig(), backend=None):
    """Kalman filter + RTS smoother under a local-level model.

    Observation variance is half the variance of first differences; process
    variance is ``process_var_ratio`` times that.
    """
    y = np.asarray(series, dtype=np.float64)
    return lds_smooth_matrix(y[:, None], config, backend)[:, 0]


def preprocess_eeg(trial: Trial, config: PreprocConfig, rate, channel_names=None, origin=(), modality="EEG"):
    x = filtered_eeg(trial, config, rate, modality)
    if math.isfinite(config.pca_kurtosis_threshold):
        x, _ = pca_suppress(x, config.pca_kurtosis_threshold)
    return features_from_filtered(x, config, rate, channel_names, origin)


def filtered_eeg(trial: Trial, config: PreprocConfig, rate, modality="EEG"):
    """Baseline removal and broadband filtering, the stages before PCA."""
    if modality not in trial.signals:
        raise ValidationError(f"trial {trial.trial_id} has no {modality} signal")
    trial = remove_baseline(trial, modality)
    low, high = config.bandpass
    return bandpass(trial.signals[modality], low, high, rate, config.filter_order)


def features_from_filtered(x, config: PreprocConfig, rate, channel_names=None, origin=()):
    """DE features and smoothing on an already filtered (and cleaned) signal."""
    tensor = de_features(x, config.bands, config.window_seconds, rate, config.filter_order, channel_names, origin)
    if config.lds.iterations > 0:
        tensor.values = lds_smooth_matrix(tensor.values, config.lds)
    return tensor
