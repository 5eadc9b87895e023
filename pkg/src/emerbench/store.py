"""Feature store: per-unit feature tensors plus labels, in memory or on disk.

On disk each tensor is a signal container holding the (features, windows)
matrix at ``1 / window_seconds`` Hz, next to a JSON sidecar with feature
names, window size, origin and floored-window flags. ``index.json`` maps
units to tensor files and labels.
"""
import json
from pathlib import Path

import numpy as np

from . import container
from .errors import MissingFeatures
from .preproc import FeatureTensor

INDEX_NAME = "index.json"


def save_tensor(stem, tensor: FeatureTensor):
    stem = Path(stem)
    container.write_container(stem.with_suffix(".emrc"), tensor.values.T, 1.0 / tensor.window_seconds)
    meta = {
        "feature_names": list(tensor.feature_names),
        "window_seconds": tensor.window_seconds,
        "origin": list(tensor.origin),
        "floored": np.argwhere(tensor.floored).tolist(),
    }
    stem.with_suffix(".json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def load_tensor(stem) -> FeatureTensor:
    stem = Path(stem)
    data, _ = container.read_container(stem.with_suffix(".emrc"))
    meta = json.loads(stem.with_suffix(".json").read_text())
    values = data.T.astype(np.float64)
    floored = np.zeros(values.shape, dtype=bool)
    for r, c in meta["floored"]:
        floored[r, c] = True
    origin = tuple(meta["origin"])
    return FeatureTensor(values, meta["window_seconds"], origin, meta["feature_names"], floored)


def _unit_key(unit):
    return f"{unit[0]}/{unit[1]}/{unit[2]}"


class FeatureStore:
    """Mapping of unit ``(subject, session, trial)`` to modality tensors and a label."""

    def __init__(self, dataset_name="", n_classes=0, modalities=()):
        self.dataset_name = dataset_name
        self.n_classes = n_classes
        self.modalities = tuple(modalities)
        self._features = {}
        self._labels = {}
        self._paths = {}

    def add(self, unit, tensors: dict, label: int, paths=None):
        unit = (str(unit[0]), int(unit[1]), int(unit[2]))
        self._features[unit] = dict(tensors)
        self._labels[unit] = int(label)
        if paths:
            self._paths[unit] = dict(paths)

    def __contains__(self, unit):
        return unit in self._features

    def __len__(self):
        return len(self._features)

    def units(self):
        return sorted(self._features)

    def features(self, unit) -> dict:
        try:
            return self._features[unit]
        except KeyError:
            raise MissingFeatures(f"no features for unit {unit}") from None

    def label(self, unit) -> int:
        return self._labels[unit]

    def groups(self) -> dict:
        """``{(subject, session): [(trial, label), ...]}`` for the splitters."""
        out = {}
        for unit in self.units():
            out.setdefault(unit[:2], []).append((unit[2], self._labels[unit]))
        return out

    def write_index(self, directory):
        """Write ``index.json`` referencing tensors by path (relative when possible)."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        entries = []
        for unit in self.units():
            paths = {}
            for m, p in sorted(self._paths.get(unit, {}).items()):
                try:
                    paths[m] = Path(p).resolve().relative_to(directory.resolve()).as_posix()
                except ValueError:
                    paths[m] = str(Path(p).resolve())
            entries.append({"unit": list(unit), "label": self._labels[unit], "tensors": paths})
        doc = {
            "dataset_name": self.dataset_name,
            "n_classes": self.n_classes,
            "modalities": list(self.modalities),
            "units": entries,
        }
        (directory / INDEX_NAME).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")

    def save(self, directory):
        """Persist every tensor under ``directory`` and write the index."""
        directory = Path(directory)
        (directory / "tensors").mkdir(parents=True, exist_ok=True)
        for unit in self.units():
            paths = {}
            for m, t in sorted(self._features[unit].items()):
                stem = directory / "tensors" / f"{unit[0]}_s{unit[1]}_t{unit[2]}_{m}"
                save_tensor(stem, t)
                paths[m] = stem
            self._paths[unit] = paths
        self.write_index(directory)

    @classmethod
    def load(cls, directory) -> "FeatureStore":
        directory = Path(directory)
        doc = json.loads((directory / INDEX_NAME).read_text())
        store = cls(doc["dataset_name"], doc["n_classes"], doc["modalities"])
        for e in doc["units"]:
            unit = (str(e["unit"][0]), int(e["unit"][1]), int(e["unit"][2]))
            paths = {m: directory / p for m, p in e["tensors"].items()}
            tensors = {m: load_tensor(p) for m, p in paths.items()}
            store.add(unit, tensors, e["label"], paths)
        return store
