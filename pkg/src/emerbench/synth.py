"""Seeded synthetic multimodal datasets written to disk (manifest + containers).

EEG is a sum of band-limited noise components built with the same
Butterworth machinery as preprocessing, so class structure shows up directly
in DE features: in the first half of the channels every band's variance is
multiplied by ``1 + c * class_separation`` for class index ``c``. Each
subject multiplies band variances by ``exp(subject_shift * z)`` with a fixed
standard-normal ``z`` per (channel, band), and shifts aux means by
``subject_shift * z'``.

The aux modality is either 8 peripheral channels (white noise with mean
``c * class_separation``) or an annotated eye-tracking stream whose pupil
level and blink rate depend on the class.
"""
import math
import shutil
from dataclasses import asdict, dataclass
from pathlib import Path
from types import MappingProxyType

import numpy as np

from . import container
from .aux_features import EyeEvent, EyeStream, write_eye_stream
from .errors import IoFailure, ValidationError
from .preproc import DEFAULT_BANDS, bandpass
from .signal_model import (
    EyePayload,
    LabelScheme,
    Modality,
    ModalityKind,
    RecordingSet,
    TrialEntry,
    dump_manifest,
)

EEG_BAND_AMPLITUDE = (2.0, 1.5, 1.0, 0.7, 0.5)
EYE_RATE = 60.0
MANIFEST_NAME = "manifest.toml"


@dataclass(frozen=True)
class SynthSpec:
    n_subjects: int = 6
    n_sessions: int = 1
    n_trials: int = 15
    classes: int = 3
    eeg_channels: int = 8
    aux_channels: int = 8
    sample_rate: float = 200.0
    trial_seconds: float = 20.0
    class_separation: float = 3.0
    subject_shift: float = 0.0
    seed: int = 0
    aux_kind: str = "Peripheral"
    baseline_seconds: float = 1.0

    def __post_init__(self):
        for name in ("n_subjects", "n_sessions", "n_trials", "eeg_channels", "aux_channels"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.classes < 2:
            raise ValidationError("classes must be >= 2")
        if self.class_separation < 0 or self.subject_shift < 0:
            raise ValidationError("class_separation and subject_shift must be >= 0")
        if self.sample_rate <= 2 * DEFAULT_BANDS[-1].high_hz:
            raise ValidationError(f"sample_rate must exceed {2 * DEFAULT_BANDS[-1].high_hz} Hz")
        if self.trial_seconds <= 0 or self.baseline_seconds < 0:
            raise ValidationError("trial_seconds must be > 0 and baseline_seconds >= 0")
        if self.aux_kind not in ("Peripheral", "EyeMovement"):
            raise ValidationError(f"aux_kind must be Peripheral or EyeMovement, got {self.aux_kind!r}")
        if self.aux_kind == "Peripheral" and self.aux_channels != 8:
            raise ValidationError("the peripheral aux modality has exactly 8 channels")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    def to_dict(self):
        return asdict(self)


def _rng(spec, *key):
    return np.random.default_rng(np.random.SeedSequence([spec.seed, *key]))


def _band_noise(rng, n_ch, n, rate, band):
    white = rng.standard_normal((n_ch, n))
    # normalise the band-passed white noise to unit variance
    gain = math.sqrt(rate / (2.0 * (band.high_hz - band.low_hz)))
    return gain * bandpass(white, band.low_hz, band.high_hz, rate)


def _eeg(spec, rng, label, subject_z, n):
    n_ch = spec.eeg_channels
    affected = np.arange(n_ch) < math.ceil(n_ch / 2)
    out = np.zeros((n_ch, n))
    for b, band in enumerate(DEFAULT_BANDS):
        var = np.exp(spec.subject_shift * subject_z[:, b]) * EEG_BAND_AMPLITUDE[b] ** 2
        var = var * np.where(affected, 1.0 + label * spec.class_separation, 1.0)
        out += np.sqrt(var)[:, None] * _band_noise(rng, n_ch, n, spec.sample_rate, band)
    return out


def _peripheral(spec, rng, label, subject_z, n):
    return rng.standard_normal((spec.aux_channels, n)) + label * spec.class_separation + spec.subject_shift * subject_z[:, None]


def _eye_stream(spec, rng, label, subject_z):
    n = int(round(spec.trial_seconds * EYE_RATE))
    t = np.arange(n) / EYE_RATE
    level = 3.0 + 0.2 * label * spec.class_separation + spec.subject_shift * subject_z[0]
    pupil_x = level + 0.05 * rng.standard_normal(n)
    pupil_y = level + 0.05 * rng.standard_normal(n)
    events = []
    gaze_x, gaze_y = np.zeros(n), np.zeros(n)
    clock, x, y = 0.0, 0.0, 0.0
    while clock < spec.trial_seconds:
        fix = float(rng.uniform(0.2, 0.6))
        events.append(EyeEvent("fixation", clock, min(clock + fix, spec.trial_seconds)))
        mask = (t >= clock) & (t < clock + fix)
        gaze_x[mask], gaze_y[mask] = x, y
        clock += fix
        sac = float(rng.uniform(0.02, 0.06))
        if clock + sac >= spec.trial_seconds:
            break
        dx, dy = rng.normal(0.0, 2.0, size=2)
        events.append(EyeEvent("saccade", clock, clock + sac))
        mask = (t >= clock) & (t < clock + sac)
        frac = (t[mask] - clock) / sac
        gaze_x[mask], gaze_y[mask] = x + frac * dx, y + frac * dy
        x, y = x + dx, y + dy
        clock += sac
    gaze_x[t >= clock] = x
    gaze_y[t >= clock] = y
    blink_rate = 0.3 * (1.0 + label * spec.class_separation)
    clock = float(rng.exponential(1.0 / blink_rate))
    while clock < spec.trial_seconds - 0.2:
        events.append(EyeEvent("blink", clock, clock + float(rng.uniform(0.1, 0.2))))
        clock += 0.2 + float(rng.exponential(1.0 / blink_rate))
    gaze_x = gaze_x + 0.01 * rng.standard_normal(n)
    gaze_y = gaze_y + 0.01 * rng.standard_normal(n)
    events.sort(key=lambda e: (e.start, e.kind))
    return EyeStream(t, pupil_x, pupil_y, gaze_x, gaze_y, tuple(events))


def synthetic_recordings(spec: SynthSpec, root) -> RecordingSet:
    """Write the dataset under ``root`` and return its descriptor."""
    root = Path(root).resolve()
    eeg_names = tuple(f"EEG{i:02d}" for i in range(spec.eeg_channels))
    eeg_mod = Modality(ModalityKind.EEG, eeg_names, spec.sample_rate)
    if spec.aux_kind == "Peripheral":
        aux_mod = Modality(ModalityKind.PERIPHERAL, tuple(f"PPS{i}" for i in range(spec.aux_channels)), spec.sample_rate)
    else:
        aux_mod = Modality(ModalityKind.EYE, ("pupil_x", "pupil_y", "gaze_x", "gaze_y"), EYE_RATE, EyePayload.RAW)
    scheme = LabelScheme("synthetic", tuple(f"class{c}" for c in range(spec.classes)))
    n = int(round(spec.trial_seconds * spec.sample_rate))
    n_base = int(round(spec.baseline_seconds * spec.sample_rate))
    subjects = tuple(f"sub{i:02d}" for i in range(spec.n_subjects))
    trials = {}
    try:
        for si, subject in enumerate(subjects):
            srng = _rng(spec, 1, si)
            eeg_z = srng.standard_normal((spec.eeg_channels, len(DEFAULT_BANDS)))
            aux_z = srng.standard_normal(spec.aux_channels)
            sdir = root / "signals" / subject
            sdir.mkdir(parents=True, exist_ok=True)
            for session in range(1, spec.n_sessions + 1):
                labels = _rng(spec, 2, si, session).permutation(np.arange(spec.n_trials) % spec.classes)
                group = []
                for trial in range(spec.n_trials):
                    rng = _rng(spec, 3, si, session, trial)
                    label = int(labels[trial])
                    stem = sdir / f"s{session}_t{trial:03d}"
                    dc = rng.normal(0.0, 5.0, size=(spec.eeg_channels, 1))
                    eeg = _eeg(spec, rng, label, eeg_z, n) + dc
                    signals = {"EEG": stem.with_name(stem.name + "_eeg.emrc")}
                    container.write_container(signals["EEG"], eeg, spec.sample_rate)
                    baseline = {}
                    if n_base:
                        baseline["EEG"] = stem.with_name(stem.name + "_eeg_baseline.emrc")
                        base = dc + 0.1 * rng.standard_normal((spec.eeg_channels, n_base))
                        container.write_container(baseline["EEG"], base, spec.sample_rate)
                    if spec.aux_kind == "Peripheral":
                        signals[aux_mod.name] = stem.with_name(stem.name + "_pps.emrc")
                        container.write_container(signals[aux_mod.name], _peripheral(spec, rng, label, aux_z, n), spec.sample_rate)
                    else:
                        signals[aux_mod.name] = stem.with_name(stem.name + "_eye.csv")
                        write_eye_stream(signals[aux_mod.name], _eye_stream(spec, rng, label, aux_z))
                    group.append(TrialEntry(subject, session, trial, scheme.classes[label], label, signals, baseline))
                trials[(subject, session)] = tuple(group)
    except OSError as exc:
        raise IoFailure(f"cannot write synthetic dataset under {root}: {exc}") from exc
    recordings = RecordingSet(
        dataset_name=f"synthetic-{spec.seed}",
        subjects=subjects,
        sessions_per_subject=spec.n_sessions,
        trials=MappingProxyType(trials),
        label_scheme=scheme,
        modalities=(eeg_mod, aux_mod),
        root=root,
    )
    (root / MANIFEST_NAME).write_text(dump_manifest(recordings))
    return recordings


def generate_synthetic(spec: SynthSpec, root, overwrite=False) -> Path:
    """Generate into ``root`` and return the manifest path."""
    root = Path(root)
    if root.exists() and any(root.iterdir()):
        if not overwrite:
            raise IoFailure(f"{root} is not empty (pass overwrite=True to replace it)")
        shutil.rmtree(root)
    root.mkdir(parents=True, exist_ok=True)
    synthetic_recordings(spec, root)
    return root / MANIFEST_NAME
