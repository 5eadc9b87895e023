"""Classification metrics, aggregation and rank-sum scoring."""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import EmptyInput, LabelOutOfRange, LengthMismatch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricPair:
    accuracy: float
    macro_f1: float

    def __post_init__(self):
        for name in ("accuracy", "macro_f1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    def as_dict(self):
        return {"accuracy": self.accuracy, "macro_f1": self.macro_f1}


def confusion_matrix(predictions, labels, n_classes):
    p = np.asarray(predictions)
    t = np.asarray(labels)
    if p.shape != t.shape or p.ndim != 1:
        raise LengthMismatch(f"predictions {p.shape} and labels {t.shape} differ")
    if p.size == 0:
        raise EmptyInput("no predictions to score")
    for name, arr in (("prediction", p), ("label", t)):
        bad = (arr < 0) | (arr >= n_classes) | (arr != np.round(arr))
        if bad.any():
            raise LabelOutOfRange(f"{name} {arr[bad][0]} outside 0..{n_classes - 1}")
    flat = t.astype(np.int64) * n_classes + p.astype(np.int64)
    return np.bincount(flat, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


def macro_f1_from_confusion(cm) -> float:
    """Unweighted mean of per-class F1; classes absent from labels and predictions are skipped."""
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    present = (support > 0) | (predicted > 0)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return float(f1[present].mean())


def confusion_metrics(predictions, labels, n_classes):
    """Return ``(MetricPair, confusion)``; rows of the confusion matrix are true classes."""
    cm = confusion_matrix(predictions, labels, n_classes)
    acc = float(np.trace(cm) / cm.sum())
    return MetricPair(acc, macro_f1_from_confusion(cm)), cm


def aggregate(values):
    """Mean and population standard deviation."""
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        raise EmptyInput("cannot aggregate zero units")
    mean = float(v.mean())
    return mean, float(np.sqrt(((v - mean) ** 2).mean()))


def aggregate_pairs(pairs):
    pairs = list(pairs)
    return {
        "accuracy": aggregate(p.accuracy for p in pairs),
        "macro_f1": aggregate(p.macro_f1 for p in pairs),
    }


def rank_scores(table, higher_is_better=True):
    """Rank-sum scores over metrics.

    ``table`` maps method -> {metric: value}. Methods missing any metric (or
    holding a NaN/None) are excluded. Per metric the best method gets ``n``
    points down to 1 for the worst; ties share the mean of the spanned ranks.
    ``higher_is_better`` may be a bool or a per-metric dict.
    """
    if not table:
        return {}
    metrics = sorted({m for row in table.values() for m in row})

    def complete(row):
        return all(m in row and row[m] is not None and not math.isnan(row[m]) for m in metrics)

    methods = sorted(name for name, row in table.items() if complete(row))
    for name in sorted(set(table) - set(methods)):
        log.info("rank scores: %s excluded (incomplete results)", name)
    if not methods:
        return {}
    scores = dict.fromkeys(methods, 0.0)
    for metric in metrics:
        hib = higher_is_better[metric] if isinstance(higher_is_better, dict) else higher_is_better
        col = np.array([table[name][metric] for name in methods], dtype=np.float64)
        ranks = rankdata(col if hib else -col, method="average")
        for name, r in zip(methods, ranks):
            scores[name] += float(r)
    return scores
