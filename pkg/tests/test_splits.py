from collections import Counter, defaultdict

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emerbench.errors import MissingFeatures, TooFewSubjects, TooFewTrials, ValidationError
from emerbench.preproc import FeatureTensor
from emerbench.splits import SplitPlan, SplitRatio, Task, check_plan, materialize, split_sd, split_si
from emerbench.store import FeatureStore


def _groups(n_subjects, n_sessions, n_trials, n_classes, seed=0):
    r = np.random.default_rng(seed)
    return {
        (f"s{s:02d}", sess): [(t, int(r.integers(n_classes))) for t in range(1, n_trials + 1)]
        for s in range(n_subjects)
        for sess in range(1, n_sessions + 1)
    }


def _balanced(n_subjects, n_trials, n_classes=3):
    return {(f"s{s:02d}", 1): [(t, t % n_classes) for t in range(1, n_trials + 1)] for s in range(n_subjects)}


def brute_force_violations(plan, groups):
    """Independent scan: partition, SI purity, SD locality."""
    out = []
    units = [u for u, _ in plan.assignment]
    expected = [(s, sess, t) for (s, sess), trials in groups.items() for t, _ in trials]
    if Counter(units) != Counter(expected):
        out.append("not a partition of the dataset units")
    if plan.task is Task.SI:
        for subj in {u[0] for u in units}:
            if len({st for u, st in plan.assignment if u[0] == subj}) != 1:
                out.append(f"subject {subj} spans sets")
    else:
        for key in groups:
            sets = {st for u, st in plan.assignment if u[:2] == key}
            if sets != {"train", "val", "test"}:
                out.append(f"group {key} not split internally")
    return out


@pytest.mark.parametrize("k,sizes", [(15, (9, 3, 3)), (40, (24, 8, 8)), (5, (3, 1, 1)), (17, (11, 3, 3))])
def test_sd_sizes(k, sizes):
    plan = split_sd(_balanced(2, k), SplitRatio(), seed=0)
    for group in plan.groups():
        sub = plan.restricted_to(group)
        assert tuple(len(sub.units(s)) for s in ("train", "val", "test")) == sizes


@pytest.mark.parametrize("n,sizes", [(12, (8, 2, 2)), (32, (20, 6, 6)), (3, (1, 1, 1)), (4, (2, 1, 1))])
def test_si_subject_counts(n, sizes):
    plan = split_si(_balanced(n, 5), SplitRatio(), seed=1)
    subjects = {s: {u[0] for u in plan.units(s)} for s in ("train", "val", "test")}
    assert tuple(len(subjects[s]) for s in ("train", "val", "test")) == sizes


def test_sd_stratified_when_possible():
    plan = split_sd(_balanced(3, 15), SplitRatio(), seed=4)
    labels = {(f"s{s:02d}", 1, t): t % 3 for s in range(3) for t in range(1, 16)}
    for group in plan.groups():
        sub = plan.restricted_to(group)
        for set_name, per_class in (("train", 3), ("val", 1), ("test", 1)):
            counts = Counter(labels[u] for u in sub.units(set_name))
            assert counts == {0: per_class, 1: per_class, 2: per_class}


def test_too_few_trials_names_group():
    groups = _balanced(2, 5)
    groups[("s01", 1)] = groups[("s01", 1)][:4]
    with pytest.raises(TooFewTrials, match="s01"):
        split_sd(groups)


def test_too_few_subjects():
    with pytest.raises(TooFewSubjects):
        split_si(_balanced(2, 5))


@pytest.mark.parametrize("bad", [(3, 1, 0), (0, 1, 1), (3, -1, 1), (3.0, 1, 1)])
def test_ratio_rejects_non_positive(bad):
    with pytest.raises(ValidationError):
        SplitRatio(*bad)


def test_plan_text_round_trip_and_determinism():
    groups = _groups(4, 2, 12, 3)
    a = split_sd(groups, seed=99)
    b = split_sd(groups, seed=99)
    assert a.dumps() == b.dumps()
    assert SplitPlan.loads(a.dumps()) == a
    assert split_sd(groups, seed=100).dumps() != a.dumps()
    lines = a.dumps().splitlines()
    assert sum(1 for ln in lines if "\t" in ln and not ln.startswith("#")) == 4 * 2 * 12


def test_seed_independent_of_group_order():
    groups = _groups(4, 1, 10, 2)
    reordered = dict(reversed(list(groups.items())))
    assert split_sd(groups, seed=5) == split_sd(reordered, seed=5)
    assert split_si(groups, seed=5) == split_si(reordered, seed=5)


shapes = st.tuples(
    st.integers(3, 10),   # subjects
    st.integers(1, 3),    # sessions
    st.integers(5, 30),   # trials per group
    st.integers(2, 5),    # classes
    st.integers(0, 2**32 - 1),
)


@settings(max_examples=150, deadline=None)
@given(shapes, st.sampled_from([Task.SD, Task.SI]), st.sampled_from([(3, 1, 1), (2, 1, 1), (4, 2, 1), (1, 1, 1)]))
def test_plans_have_no_violations(shape, task, ratio):
    n_subj, n_sess, n_trials, n_classes, seed = shape
    ratio = SplitRatio(*ratio)
    if task is Task.SD and n_trials < ratio.total:
        return
    groups = _groups(n_subj, n_sess, n_trials, n_classes, seed)
    plan = split_sd(groups, ratio, seed) if task is Task.SD else split_si(groups, ratio, seed)
    assert brute_force_violations(plan, groups) == []
    assert check_plan(plan, groups) == []


def test_check_plan_catches_planted_violations():
    groups = _balanced(3, 5)
    plan = split_si(groups, seed=0)
    bad = SplitPlan(Task.SI, plan.assignment[:-1] + ((plan.assignment[0][0], "test"),), 0)
    assert check_plan(bad, groups)
    sd = split_sd(groups)
    moved = tuple((u, "train") for u, _ in sd.assignment)
    assert check_plan(SplitPlan(Task.SD, moved, 0), groups)


# -- materialize ----------------------------------------------------------------

def _store(groups, rng):
    store = FeatureStore("toy", 3, ["EEG", "Peripheral"])
    for (s, sess), trials in groups.items():
        for t, label in trials:
            n = int(rng.integers(3, 9))
            tag = np.full((n, 1), hash((s, sess, t)) % 100_000, dtype=float)
            store.add((s, sess, t), {
                "EEG": FeatureTensor(np.hstack([tag, rng.standard_normal((n, 2))]), 1.0, (), ["id", "a", "b"]),
                "Peripheral": FeatureTensor(np.hstack([tag, rng.standard_normal((n, 1))]), 1.0, (), ["id", "c"]),
            }, label)
    return store


def test_materialize_inherits_sets_without_leakage(rng):
    groups = _balanced(3, 15)
    store = _store(groups, rng)
    plan = split_sd(groups, seed=2)
    sets = materialize(plan, store, ["EEG", "Peripheral"])
    owner = defaultdict(set)
    for name, ss in sets.items():
        assert len(ss) == sum(store.features(u)["EEG"].n_windows for u in plan.units(name))
        np.testing.assert_array_equal(ss.X["EEG"][:, 0], ss.X["Peripheral"][:, 0])
        for i, unit in enumerate(ss.units):
            rows = ss.windows_of(unit)
            assert np.all(ss.X["EEG"][rows, 0] == hash(unit) % 100_000)
            assert np.all(ss.y[rows] == store.label(unit))
            owner[unit].add(name)
    assert all(len(v) == 1 for v in owner.values())


def test_materialize_trial_proportional(rng):
    groups = _balanced(2, 15)
    store = FeatureStore("toy", 3, ["EEG"])
    for (s, sess), trials in groups.items():
        for t, label in trials:
            store.add((s, sess, t), {"EEG": FeatureTensor(np.zeros((20, 1)), 1.0, (), ["x"])}, label)
    sets = materialize(split_sd(groups), store, ["EEG"])
    assert [len(sets[s]) for s in ("train", "val", "test")] == [2 * 9 * 20, 2 * 3 * 20, 2 * 3 * 20]


def test_materialize_is_deterministic(rng):
    groups = _balanced(3, 10)
    store = _store(groups, rng)
    plan = split_si(groups, seed=8)
    a = materialize(plan, store, ["EEG"])
    b = materialize(plan, store, ["EEG"])
    for name in a:
        np.testing.assert_array_equal(a[name].X["EEG"], b[name].X["EEG"])
        np.testing.assert_array_equal(a[name].y, b[name].y)


def test_materialize_missing_features(rng):
    groups = _balanced(3, 5)
    store = _store(groups, rng)
    with pytest.raises(MissingFeatures):
        materialize(split_sd(groups), store, ["EEG", "EyeMovement"])
    with pytest.raises(MissingFeatures):
        materialize(split_sd(_balanced(4, 5)), store, ["EEG"])
