import numpy as np
import pytest
import tomli_w

from emerbench import container
from emerbench.errors import ManifestError
from emerbench.signal_model import (
    LabelScheme, Modality, Trial, dump_manifest, load_trial, validate_manifest,
)


def _dataset(root, subjects=2, sessions=1, trials=3, eeg_ch=2, eye_rows=4, classes=("neg", "neu", "pos"),
             skip=(), eye=True):
    """Write tiny containers and return the manifest document."""
    root.mkdir(parents=True, exist_ok=True)
    eeg = np.zeros((eeg_ch, 8), dtype=np.float32)
    container.write_container(root / "eeg.emrc", eeg, 200.0)
    container.write_container(root / "eye.emrc", np.zeros((33, eye_rows), dtype=np.float32), 0.25)
    mods = [{"kind": "EEG", "channel_names": [f"c{i}" for i in range(eeg_ch)], "sample_rate": 200.0}]
    if eye:
        mods.append({"kind": "EyeMovement", "channel_names": [f"e{i}" for i in range(33)], "sample_rate": 0.25,
                     "payload": "PrecomputedFeatures"})
    doc = {
        "schema_version": 1,
        "dataset_name": "toy",
        "sessions_per_subject": sessions,
        "label_scheme": {"name": "emotion", "classes": list(classes), "source": "DiscreteStimulus"},
        "modalities": mods,
        "trials": [],
    }
    for s in range(subjects):
        for sess in range(1, sessions + 1):
            if (s, sess) in skip:
                continue
            for t in range(1, trials + 1):
                signals = {"EEG": "eeg.emrc"}
                if eye:
                    signals["EyeMovement"] = "eye.emrc"
                doc["trials"].append({"subject": f"s{s:02d}", "session": sess, "trial": t,
                                      "label": classes[t % len(classes)], "signals": signals})
    return doc


def _validate(doc, root):
    return validate_manifest(tomli_w.dumps(doc), root=root)


def test_seed_shaped_manifest_is_valid(tmp_path):
    doc = _dataset(tmp_path, subjects=12, sessions=3, trials=15, eeg_ch=62)
    rec = _validate(doc, tmp_path)
    assert len(rec.subjects) == 12
    assert rec.sessions_per_subject == 3
    assert len(rec.trials) == 36
    assert all(len(v) == 15 for v in rec.trials.values())
    assert [m.name for m in rec.modalities] == ["EEG", "EyeMovement"]
    assert rec.n_classes == 3


def test_empty_session_reported(tmp_path):
    doc = _dataset(tmp_path, subjects=2, sessions=2, skip={(1, 2)})
    with pytest.raises(ManifestError) as exc:
        _validate(doc, tmp_path)
    codes = [v.code for v in exc.value.violations]
    assert "ChannelCountMismatch" not in codes
    assert any("empty session" in v.message for v in exc.value.violations)


def test_missing_file_named(tmp_path):
    doc = _dataset(tmp_path)
    doc["trials"][1]["signals"]["EEG"] = "nowhere.emrc"
    with pytest.raises(ManifestError) as exc:
        _validate(doc, tmp_path)
    missing = [v for v in exc.value.violations if v.code == "MissingFile"]
    assert len(missing) == 1
    assert str(tmp_path / "nowhere.emrc") in missing[0].message


def test_all_violations_reported(tmp_path):
    doc = _dataset(tmp_path)
    doc["trials"][0]["signals"]["EEG"] = "gone.emrc"
    doc["trials"][1]["label"] = "bored"
    doc["trials"][2]["trial"] = doc["trials"][1]["trial"]
    doc["modalities"][0]["channel_names"] = ["a", "b", "c"]
    with pytest.raises(ManifestError) as exc:
        _validate(doc, tmp_path)
    codes = {v.code for v in exc.value.violations}
    assert {"MissingFile", "UnknownLabel", "DuplicateTrialId", "ChannelCountMismatch"} <= codes


def test_validation_is_pure(tmp_path):
    text = tomli_w.dumps(_dataset(tmp_path))
    assert validate_manifest(text, root=tmp_path) == validate_manifest(text, root=tmp_path)


def test_round_trip(small_manifest, small_recordings):
    again = validate_manifest(dump_manifest(small_recordings), root=small_manifest.parent)
    assert again == small_recordings


def test_subject_without_declared_modality_is_dropped(tmp_path):
    doc = _dataset(tmp_path, subjects=3)
    for t in doc["trials"]:
        if t["subject"] == "s01":
            del t["signals"]["EyeMovement"]
    rec = _validate(doc, tmp_path)
    assert rec.subjects == ("s00", "s02")
    assert rec.dropped_subjects == ("s01",)


def test_rating_threshold_is_strict():
    scheme = LabelScheme("valence", ("low", "high"), "ThresholdedRating", 5.0)
    assert [scheme.resolve(v) for v in (1, 5.0, 5.01, 9)] == [0, 0, 1, 1]


@pytest.mark.parametrize("kwargs", [
    {"name": "x", "classes": ("a",)},
    {"name": "x", "classes": ("a", "b"), "threshold": 3.0},
    {"name": "x", "classes": ("a", "b"), "source": "ThresholdedRating"},
])
def test_label_scheme_invariants(kwargs):
    with pytest.raises(ValueError):
        LabelScheme(**kwargs)


@pytest.mark.parametrize("kwargs", [
    {"kind": "EEG", "channel_names": ["a"], "sample_rate": 0},
    {"kind": "EEG", "channel_names": [], "sample_rate": 100},
    {"kind": "EEG", "channel_names": ["a", "a"], "sample_rate": 100},
    {"kind": "EyeMovement", "channel_names": ["a"], "sample_rate": 100},
])
def test_modality_invariants(kwargs):
    with pytest.raises(ValueError):
        Modality(**kwargs)


def test_trial_is_immutable():
    t = Trial(1, 0, {"EEG": np.zeros((2, 4))})
    with pytest.raises(ValueError):
        t.signals["EEG"][0, 0] = 1.0
    with pytest.raises(TypeError):
        t.signals["EEG"] = np.ones((2, 4))


def test_load_trial_shapes(small_recordings):
    entry = next(small_recordings.entries())
    trial = load_trial(small_recordings, entry)
    eeg = small_recordings.modality("EEG")
    assert trial.signals["EEG"].shape[0] == len(eeg.channel_names)
    assert "EEG" in trial.baseline
