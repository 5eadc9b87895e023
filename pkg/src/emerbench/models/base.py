"""Run records shared by in-engine models and external adapters."""
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class EpochRecord:
    epoch: int  # 1-based
    train_loss: float
    val_accuracy: float
    val_f1: float


def select_epoch(history) -> int:
    """Epoch with the highest validation macro-F1; earliest on ties."""
    if not history:
        raise ValueError("empty training history")
    best = max(h.val_f1 for h in history)
    return next(h.epoch for h in history if h.val_f1 == best)


@dataclass
class ModelRun:
    model_id: str
    history: list
    selected_epoch: int
    seed: int
    params: dict = field(default_factory=dict)  # name -> ndarray, snapshot of the selected epoch
    config: dict = field(default_factory=dict)
    # adapter runs only; not serialized
    test_predictions: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    transcript: list = field(default_factory=list, repr=False, compare=False)

    def to_dict(self):
        return {
            "model_id": self.model_id,
            "seed": self.seed,
            "config": self.config,
            "selected_epoch": self.selected_epoch,
            "history": [vars(h) for h in self.history],
            "params": {k: {"shape": list(np.shape(v)), "data": np.ravel(v).tolist()} for k, v in sorted(self.params.items())},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, d) -> "ModelRun":
        params = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in d["params"].items()}
        history = [EpochRecord(**h) for h in d["history"]]
        return cls(d["model_id"], history, d["selected_epoch"], d["seed"], params, d.get("config", {}))


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=np.float64)
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        return cls(mean, scale)

    def __call__(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale
