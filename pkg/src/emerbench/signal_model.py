"""Domain types and the dataset manifest.

A dataset is described by one TOML manifest at its root (see
``docs/manifest.md``). ``validate_manifest`` resolves it into a
``RecordingSet`` descriptor whose trials point at signal files; arrays are
only read when a trial is loaded.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Optional

import numpy as np
import tomli_w

from . import container
from .errors import ChannelMismatch, ManifestError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1


class ModalityKind(str, Enum):
    EEG = "EEG"
    EYE = "EyeMovement"
    PERIPHERAL = "Peripheral"


class EyePayload(str, Enum):
    RAW = "RawTracking"
    FEATURES = "PrecomputedFeatures"


class LabelSource(str, Enum):
    DISCRETE = "DiscreteStimulus"
    RATING = "ThresholdedRating"


@dataclass(frozen=True)
class Modality:
    kind: ModalityKind
    channel_names: tuple
    sample_rate: float
    payload: Optional[EyePayload] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ModalityKind(self.kind))
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        if self.payload is not None:
            object.__setattr__(self, "payload", EyePayload(self.payload))
        if not self.sample_rate > 0:
            raise ValueError(f"{self.kind.value}: sample_rate must be > 0, got {self.sample_rate}")
        if not self.channel_names:
            raise ValueError(f"{self.kind.value}: channel_names is empty")
        if len(set(self.channel_names)) != len(self.channel_names):
            raise ValueError(f"{self.kind.value}: duplicate channel names")
        if self.kind is ModalityKind.EYE and self.payload is None:
            raise ValueError("EyeMovement modality needs a payload kind")
        if self.kind is not ModalityKind.EYE and self.payload is not None:
            raise ValueError(f"{self.kind.value}: payload kind only applies to EyeMovement")

    @property
    def name(self) -> str:
        return self.kind.value


@dataclass(frozen=True)
class LabelScheme:
    name: str
    classes: tuple
    source: LabelSource = LabelSource.DISCRETE
    threshold: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "source", LabelSource(self.source))
        if len(self.classes) < 2:
            raise ValueError("a label scheme needs at least two classes")
        if self.source is LabelSource.DISCRETE and self.threshold is not None:
            raise ValueError("DiscreteStimulus schemes carry no threshold")
        if self.source is LabelSource.RATING:
            if self.threshold is None:
                raise ValueError("ThresholdedRating schemes need a threshold")
            if len(self.classes) != 2:
                raise ValueError("ThresholdedRating schemes are binary (low, high)")

    def resolve(self, label) -> int:
        """Map a raw manifest label to a class index; ``ValueError`` if unknown."""
        if self.source is LabelSource.RATING:
            if isinstance(label, bool) or not isinstance(label, (int, float)):
                raise ValueError(f"rating label must be numeric, got {label!r}")
            return int(label > self.threshold)
        if isinstance(label, str):
            if label not in self.classes:
                raise ValueError(f"unknown class name {label!r}")
            return self.classes.index(label)
        if isinstance(label, int) and not isinstance(label, bool) and 0 <= label < len(self.classes):
            return label
        raise ValueError(f"label {label!r} is not a class of {self.name!r}")


def _frozen_array(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Trial:
    """A loaded trial. ``signals`` maps modality name to (channels, samples).

    Raw eye-tracking payloads are ``EyeStream`` records instead of arrays.
    """

    trial_id: int
    label: int
    signals: Mapping
    baseline: Mapping = field(default_factory=dict)

    def __post_init__(self):
        sig = {k: (_frozen_array(v) if isinstance(v, np.ndarray) else v) for k, v in self.signals.items()}
        base = {k: _frozen_array(v) for k, v in (self.baseline or {}).items()}
        for k, v in sig.items():
            if isinstance(v, np.ndarray) and (v.ndim != 2 or v.shape[1] < 1):
                raise ValueError(f"trial {self.trial_id}: {k} signal must be (channels, samples>=1), got {v.shape}")
        for k, b in base.items():
            if k in sig and isinstance(sig[k], np.ndarray) and b.shape[0] != sig[k].shape[0]:
                raise ChannelMismatch(
                    f"trial {self.trial_id}: {k} baseline has {b.shape[0]} channels, signal has {sig[k].shape[0]}"
                )
        object.__setattr__(self, "signals", MappingProxyType(sig))
        object.__setattr__(self, "baseline", MappingProxyType(base))

    def replace_signal(self, modality, array):
        signals = dict(self.signals)
        signals[modality] = array
        return Trial(self.trial_id, self.label, signals, dict(self.baseline))


@dataclass(frozen=True)
class TrialEntry:
    """Descriptor of one trial on disk; paths are absolute."""

    subject: str
    session: int
    trial_id: int
    label: object
    label_index: int
    signals: Mapping
    baseline: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "signals", MappingProxyType({k: Path(v) for k, v in self.signals.items()}))
        object.__setattr__(self, "baseline", MappingProxyType({k: Path(v) for k, v in (self.baseline or {}).items()}))

    @property
    def key(self):
        return (self.subject, self.session, self.trial_id)

    def __eq__(self, other):
        if not isinstance(other, TrialEntry):
            return NotImplemented
        return (self.key, self.label, self.label_index, dict(self.signals), dict(self.baseline)) == (
            other.key, other.label, other.label_index, dict(other.signals), dict(other.baseline))

    __hash__ = None


@dataclass(frozen=True)
class RecordingSet:
    """Resolved dataset descriptor. ``dropped_subjects`` is provenance only
    and does not take part in equality."""

    dataset_name: str
    subjects: tuple
    sessions_per_subject: int
    trials: Mapping
    label_scheme: LabelScheme
    modalities: tuple
    root: Path
    dropped_subjects: tuple = ()

    def __eq__(self, other):
        if not isinstance(other, RecordingSet):
            return NotImplemented
        return (
            self.dataset_name, self.subjects, self.sessions_per_subject, dict(self.trials),
            self.label_scheme, self.modalities, Path(self.root).resolve(),
        ) == (
            other.dataset_name, other.subjects, other.sessions_per_subject, dict(other.trials),
            other.label_scheme, other.modalities, Path(other.root).resolve(),
        )

    __hash__ = None

    def modality(self, name) -> Modality:
        for m in self.modalities:
            if m.name == name:
                return m
        raise KeyError(name)

    def entries(self):
        """All trial entries in deterministic (subject, session, trial) order."""
        for key in sorted(self.trials):
            yield from self.trials[key]

    @property
    def n_classes(self) -> int:
        return len(self.label_scheme.classes)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


# -- manifest parsing ----------------------------------------------------------

def _schema(violations, message):
    violations.append(Violation("SchemaError", message))


def _parse_label_scheme(doc, violations):
    raw = doc.get("label_scheme")
    if not isinstance(raw, dict):
        _schema(violations, "missing [label_scheme] table")
        return None
    try:
        return LabelScheme(
            name=str(raw.get("name", "")),
            classes=raw.get("classes", ()),
            source=raw.get("source", LabelSource.DISCRETE.value),
            threshold=raw.get("threshold"),
        )
    except (ValueError, TypeError) as exc:
        _schema(violations, f"label_scheme: {exc}")
        return None


def _parse_modalities(doc, violations):
    mods = []
    for i, raw in enumerate(doc.get("modalities", [])):
        try:
            mods.append(Modality(
                kind=raw["kind"],
                channel_names=raw.get("channel_names", ()),
                sample_rate=float(raw.get("sample_rate", 0)),
                payload=raw.get("payload"),
            ))
        except (KeyError, ValueError, TypeError) as exc:
            _schema(violations, f"modalities[{i}]: {exc}")
    if not mods and not violations:
        _schema(violations, "no modalities declared")
    names = [m.name for m in mods]
    if len(set(names)) != len(names):
        _schema(violations, f"modality kinds must be unique, got {names}")
    return tuple(mods)


def _check_signal_file(path, modality, where, violations):
    if not path.is_file():
        violations.append(Violation("MissingFile", f"{where}: signal file not found: {path}"))
        return
    if modality.kind is ModalityKind.EYE and modality.payload is EyePayload.RAW:
        return
    try:
        channels, samples, rate = container.signal_shape(path)
    except Exception as exc:  # container errors are reported, not raised
        violations.append(Violation("UnreadableFile", f"{where}: {path}: {exc}"))
        return
    if channels != len(modality.channel_names):
        violations.append(Violation(
            "ChannelCountMismatch",
            f"{where}: {path} has {channels} channels, {modality.name} declares {len(modality.channel_names)}",
        ))
    if samples < 1:
        violations.append(Violation("SchemaError", f"{where}: {path} has no samples"))
    if rate is not None and abs(rate - modality.sample_rate) > 1e-9 * modality.sample_rate:
        violations.append(Violation(
            "SampleRateMismatch", f"{where}: {path} is {rate} Hz, {modality.name} declares {modality.sample_rate} Hz"
        ))


def _parse_document(doc, root):
    violations = []
    name = doc.get("dataset_name")
    if not isinstance(name, str) or not name:
        _schema(violations, "dataset_name must be a non-empty string")
    n_sessions = doc.get("sessions_per_subject")
    if not isinstance(n_sessions, int) or n_sessions < 1:
        _schema(violations, "sessions_per_subject must be an integer >= 1")
        n_sessions = 0
    scheme = _parse_label_scheme(doc, violations)
    modalities = _parse_modalities(doc, violations)
    by_name = {m.name: m for m in modalities}

    entries = {}
    seen_ids = set()
    for i, raw in enumerate(doc.get("trials", [])):
        where = f"trials[{i}]"
        try:
            subject = str(raw["subject"])
            session = int(raw["session"])
            trial_id = int(raw["trial"])
            label = raw["label"]
        except (KeyError, TypeError, ValueError) as exc:
            _schema(violations, f"{where}: missing or malformed field {exc}")
            continue
        where = f"trial (subject={subject}, session={session}, trial={trial_id})"
        if n_sessions and not 1 <= session <= n_sessions:
            _schema(violations, f"{where}: session outside 1..{n_sessions}")
        key = (subject, session, trial_id)
        if key in seen_ids:
            violations.append(Violation("DuplicateTrialId", f"{where}: duplicate trial id"))
            continue
        seen_ids.add(key)
        label_index = -1
        if scheme is not None:
            try:
                label_index = scheme.resolve(label)
            except ValueError as exc:
                violations.append(Violation("UnknownLabel", f"{where}: {exc}"))
        signals, baseline = {}, {}
        for table, out in (("signals", signals), ("baseline", baseline)):
            for mod_name, rel in dict(raw.get(table, {})).items():
                if mod_name not in by_name:
                    violations.append(Violation("UnknownModality", f"{where}: {table} names undeclared modality {mod_name!r}"))
                    continue
                path = (root / rel).resolve()
                _check_signal_file(path, by_name[mod_name], where, violations)
                out[mod_name] = path
        entries[key] = TrialEntry(subject, session, trial_id, label, label_index, signals, baseline)

    declared = doc.get("subjects")
    if declared is not None:
        subjects = [str(s) for s in declared]
        extra = sorted({k[0] for k in entries} - set(subjects))
        for s in extra:
            _schema(violations, f"trials reference undeclared subject {s!r}")
    else:
        subjects = sorted({k[0] for k in entries})
    if len(set(subjects)) != len(subjects):
        _schema(violations, "duplicate subject ids")
    subjects = sorted(set(subjects))

    # a subject with no trial carrying some declared modality is dropped
    dropped = []
    for s in subjects:
        own = [e for k, e in entries.items() if k[0] == s]
        missing = [m for m in by_name if own and not any(m in e.signals for e in own)]
        if missing:
            dropped.append(s)
            log.warning("dropping subject %s: no %s data", s, ", ".join(missing))
            continue
        for e in own:
            absent = [m for m in by_name if m not in e.signals]
            if absent:
                violations.append(Violation(
                    "MissingModality",
                    f"subject={s}, session={e.session}, trial={e.trial_id}: no signal for {', '.join(absent)}",
                ))
    kept = [s for s in subjects if s not in dropped]
    if not kept and not violations:
        _schema(violations, "no usable subjects")

    trials = {}
    for s in kept:
        for sess in range(1, n_sessions + 1):
            group = sorted((e for k, e in entries.items() if k[0] == s and k[1] == sess), key=lambda e: e.trial_id)
            if not group:
                violations.append(Violation("EmptySession", f"empty session: subject={s}, session={sess} has no trials"))
                continue
            trials[(s, sess)] = tuple(group)

    if violations:
        raise ManifestError(violations)
    return RecordingSet(
        dataset_name=name,
        subjects=tuple(kept),
        sessions_per_subject=n_sessions,
        trials=MappingProxyType(trials),
        label_scheme=scheme,
        modalities=modalities,
        root=Path(root).resolve(),
        dropped_subjects=tuple(dropped),
    )


def validate_manifest(source, root=None) -> RecordingSet:
    """Resolve a manifest into a ``RecordingSet`` or raise ``ManifestError``.

    ``source`` is a path to the manifest file, or the manifest text itself
    when ``root`` is given. Relative signal paths resolve against ``root``
    (default: the manifest's directory). Every violation found is reported.
    """
    if root is None:
        path = Path(source)
        text = path.read_text()
        root = path.parent
    else:
        text = source
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ManifestError([Violation("SchemaError", f"manifest is not valid TOML: {exc}")]) from exc
    version = doc.get("schema_version", MANIFEST_SCHEMA_VERSION)
    if version != MANIFEST_SCHEMA_VERSION:
        raise ManifestError([Violation("SchemaError", f"unsupported schema_version {version}")])
    return _parse_document(doc, Path(root))


def _rel(path, root):
    try:
        return Path(path).resolve().relative_to(Path(root).resolve()).as_posix()
    except ValueError:
        return str(Path(path).resolve())


def manifest_document(recordings: RecordingSet) -> dict:
    doc = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "dataset_name": recordings.dataset_name,
        "sessions_per_subject": recordings.sessions_per_subject,
        "subjects": list(recordings.subjects),
        "label_scheme": {
            "name": recordings.label_scheme.name,
            "classes": list(recordings.label_scheme.classes),
            "source": recordings.label_scheme.source.value,
        },
        "modalities": [],
        "trials": [],
    }
    if recordings.label_scheme.threshold is not None:
        doc["label_scheme"]["threshold"] = recordings.label_scheme.threshold
    for m in recordings.modalities:
        mod = {"kind": m.name, "sample_rate": m.sample_rate, "channel_names": list(m.channel_names)}
        if m.payload is not None:
            mod["payload"] = m.payload.value
        doc["modalities"].append(mod)
    for e in recordings.entries():
        t = {
            "subject": e.subject,
            "session": e.session,
            "trial": e.trial_id,
            "label": e.label,
            "signals": {k: _rel(v, recordings.root) for k, v in e.signals.items()},
        }
        if e.baseline:
            t["baseline"] = {k: _rel(v, recordings.root) for k, v in e.baseline.items()}
        doc["trials"].append(t)
    return doc


def dump_manifest(recordings: RecordingSet) -> str:
    """Serialize a descriptor; re-validating the text yields an equal descriptor.

    Dropped subjects are not written, so they do not reappear on reload.
    """
    return tomli_w.dumps(manifest_document(recordings))


def load_trial(recordings: RecordingSet, entry: TrialEntry) -> Trial:
    from .aux_features import read_eye_stream

    signals, baseline = {}, {}
    for name, path in entry.signals.items():
        mod = recordings.modality(name)
        if mod.kind is ModalityKind.EYE and mod.payload is EyePayload.RAW:
            signals[name] = read_eye_stream(path)
        else:
            signals[name] = container.load_signal(path)
    for name, path in entry.baseline.items():
        baseline[name] = container.load_signal(path)
    return Trial(entry.trial_id, entry.label_index, signals, baseline)
