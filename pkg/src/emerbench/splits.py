"""Deterministic train/val/test splitting for the SD and SI tasks.

Subject-dependent (SD): each (subject, session) group's trials are split on
their own. Subject-independent (SI): whole subjects are assigned to one set.
Set sizes are ``floor(k * w / sum(w))`` for val and test with the remainder
going to train.
"""
import logging
import zlib
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

from .errors import MissingFeatures, TooFewSubjects, TooFewTrials, ValidationError

log = logging.getLogger(__name__)

SETS = ("train", "val", "test")
MIN_PER_CLASS_FOR_STRATIFY = 5


class Task(str, Enum):
    SD = "SubjectDependent"
    SI = "SubjectIndependent"


@dataclass(frozen=True)
class SplitRatio:
    train: int = 3
    val: int = 1
    test: int = 1

    def __post_init__(self):
        for name in SETS:
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
                raise ValidationError(f"split ratio {name} must be a positive integer, got {v!r}")

    @property
    def total(self) -> int:
        return self.train + self.val + self.test

    def sizes(self, k, at_least_one=False):
        n_val = k * self.val // self.total
        n_test = k * self.test // self.total
        if at_least_one:
            n_val, n_test = max(1, n_val), max(1, n_test)
        return k - n_val - n_test, n_val, n_test

    def __str__(self):
        return f"{self.train}:{self.val}:{self.test}"

    @classmethod
    def parse(cls, text) -> "SplitRatio":
        if isinstance(text, (list, tuple)):
            return cls(*text)
        return cls(*(int(p) for p in str(text).split(":")))


@dataclass(frozen=True)
class SplitPlan:
    task: Task
    assignment: tuple  # ((subject, session, trial), set_name), sorted by unit
    seed: int
    ratio: SplitRatio = SplitRatio()

    def units(self, set_name):
        return [u for u, s in self.assignment if s == set_name]

    def set_of(self):
        return dict(self.assignment)

    def groups(self):
        """SD groups ``(subject, session)`` in sorted order."""
        return sorted({u[:2] for u, _ in self.assignment})

    def restricted_to(self, group) -> "SplitPlan":
        subject, session = group
        keep = tuple((u, s) for u, s in self.assignment if u[0] == subject and u[1] == session)
        return SplitPlan(self.task, keep, self.seed, self.ratio)

    def dumps(self) -> str:
        lines = [
            "# emerbench split plan",
            "version = 1",
            f"task = {self.task.value}",
            f"seed = {self.seed}",
            f"ratio = {self.ratio}",
            "# subject\tsession\ttrial\tset",
        ]
        lines += [f"{u[0]}\t{u[1]}\t{u[2]}\t{s}" for u, s in self.assignment]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text) -> "SplitPlan":
        meta, rows = {}, []
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            if "\t" in line:
                subject, session, trial, set_name = line.split("\t")
                if set_name not in SETS:
                    raise ValidationError(f"unknown set {set_name!r} in plan")
                rows.append(((subject, int(session), int(trial)), set_name))
            else:
                key, _, value = line.partition("=")
                meta[key.strip()] = value.strip()
        if meta.get("version") != "1":
            raise ValidationError(f"unsupported plan version {meta.get('version')!r}")
        return cls(Task(meta["task"]), tuple(sorted(rows)), int(meta["seed"]), SplitRatio.parse(meta["ratio"]))


def unit_table(recordings) -> dict:
    """``{(subject, session): [(trial_id, label), ...]}`` from a RecordingSet or such a dict."""
    if isinstance(recordings, Mapping):
        return {k: list(v) for k, v in recordings.items()}
    return {k: [(e.trial_id, e.label_index) for e in v] for k, v in recordings.trials.items()}


def _group_rng(seed, *parts):
    key = "\x1f".join(str(p) for p in parts).encode()
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(key)]))


def _stratified_order(trials, rng):
    by_class = defaultdict(list)
    for tid, label in trials:
        by_class[label].append(tid)
    queues = [list(rng.permutation(sorted(by_class[c]))) for c in sorted(by_class)]
    order = rng.permutation(len(queues))
    out = []
    while any(queues):
        for i in order:
            if queues[i]:
                out.append(int(queues[i].pop(0)))
    return out


def split_sd(recordings, ratio: SplitRatio = SplitRatio(), seed: int = 0, stratify=True) -> SplitPlan:
    groups = unit_table(recordings)
    assignment = []
    for subject, session in sorted(groups):
        trials = sorted(groups[(subject, session)])
        k = len(trials)
        if k < ratio.total:
            raise TooFewTrials(f"group (subject={subject}, session={session}) has {k} trials, {ratio} needs {ratio.total}")
        rng = _group_rng(seed, subject, session)
        counts = defaultdict(int)
        for _, label in trials:
            counts[label] += 1
        if stratify and min(counts.values()) >= MIN_PER_CLASS_FOR_STRATIFY:
            order = _stratified_order(trials, rng)
        else:
            if stratify:
                log.warning("group (%s, %s): fewer than %d trials per class, unstratified shuffle",
                            subject, session, MIN_PER_CLASS_FOR_STRATIFY)
            order = [int(t) for t in rng.permutation([t for t, _ in trials])]
        n_train, n_val, _ = ratio.sizes(k)
        for i, tid in enumerate(order):
            set_name = "train" if i < n_train else "val" if i < n_train + n_val else "test"
            assignment.append(((subject, session, tid), set_name))
    return SplitPlan(Task.SD, tuple(sorted(assignment)), seed, ratio)


def split_si(recordings, ratio: SplitRatio = SplitRatio(), seed: int = 0) -> SplitPlan:
    groups = unit_table(recordings)
    subjects = sorted({s for s, _ in groups})
    if len(subjects) < 3:
        raise TooFewSubjects(f"subject-independent split needs >= 3 subjects, got {len(subjects)}")
    order = [subjects[i] for i in _group_rng(seed, "subjects").permutation(len(subjects))]
    n_train, n_val, _ = ratio.sizes(len(subjects), at_least_one=True)
    set_of = {}
    for i, s in enumerate(order):
        set_of[s] = "train" if i < n_train else "val" if i < n_train + n_val else "test"
    assignment = [
        ((s, sess, tid), set_of[s])
        for (s, sess), trials in groups.items()
        for tid, _ in trials
    ]
    return SplitPlan(Task.SI, tuple(sorted(assignment)), seed, ratio)


def make_plan(recordings, task, ratio=SplitRatio(), seed=0, stratify=True) -> SplitPlan:
    if Task(task) is Task.SD:
        return split_sd(recordings, ratio, seed, stratify)
    return split_si(recordings, ratio, seed)


def check_plan(plan: SplitPlan, groups=None) -> list:
    """Brute-force audit; returns a list of human-readable violations."""
    problems = []
    seen = defaultdict(set)
    times = Counter(u for u, _ in plan.assignment)
    for unit, s in plan.assignment:
        seen[unit].add(s)
    for unit, sets in seen.items():
        if len(sets) != 1 or times[unit] != 1:
            problems.append(f"unit {unit} assigned {times[unit]} time(s) to {sorted(sets)}")
    if groups is not None:
        expected = {(s, sess, t) for (s, sess), trials in unit_table(groups).items() for t, _ in trials}
        if expected != set(seen):
            problems.append("plan units differ from dataset units")
    if plan.task is Task.SI:
        subject_sets = defaultdict(set)
        for unit, s in plan.assignment:
            subject_sets[unit[0]].add(s)
        problems += [f"subject {s} in sets {sorted(v)}" for s, v in subject_sets.items() if len(v) > 1]
    else:
        by_group = defaultdict(set)
        for unit, s in plan.assignment:
            by_group[unit[:2]].add(s)
        problems += [f"group {g} lacks sets {sorted(set(SETS) - v)}" for g, v in by_group.items() if v != set(SETS)]
    return problems


@dataclass
class SampleSet:
    """Window-level samples of one split; ``unit_index[i]`` indexes ``units``."""

    X: dict
    y: np.ndarray
    units: list
    unit_index: np.ndarray

    def __len__(self):
        return len(self.y)

    def windows_of(self, unit):
        return np.flatnonzero(self.unit_index == self.units.index(unit))


def materialize(plan: SplitPlan, store, modalities) -> dict:
    """Expand a plan into window-level ``SampleSet``s keyed by set name.

    Windows inherit their trial's set; set contents follow plan order.
    """
    out = {}
    for set_name in SETS:
        units = plan.units(set_name)
        xs = {m: [] for m in modalities}
        ys, idx = [], []
        for i, unit in enumerate(units):
            if unit not in store:
                raise MissingFeatures(f"no features for unit {unit}")
            feats = store.features(unit)
            n_rows = None
            for m in modalities:
                if m not in feats:
                    raise MissingFeatures(f"unit {unit} has no {m} features")
                rows = feats[m].values
                if n_rows is not None and rows.shape[0] != n_rows:
                    raise ValidationError(f"unit {unit}: {m} has {rows.shape[0]} windows, expected {n_rows}")
                n_rows = rows.shape[0]
                xs[m].append(rows)
            ys.append(np.full(n_rows, store.label(unit), dtype=np.int64))
            idx.append(np.full(n_rows, i, dtype=np.int64))
        X = {m: (np.concatenate(v) if v else np.empty((0, 0))) for m, v in xs.items()}
        y = np.concatenate(ys) if ys else np.empty(0, dtype=np.int64)
        ui = np.concatenate(idx) if idx else np.empty(0, dtype=np.int64)
        out[set_name] = SampleSet(X, y, units, ui)
    return out
