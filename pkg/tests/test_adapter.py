import json
import os
import signal
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from emerbench.errors import AdapterTimeout, NonZeroExit, ProtocolViolation
from emerbench.metrics import confusion_metrics
from emerbench.models import AdapterConfig, adapter_run
from emerbench.splits import SampleSet

FAULTY = str(Path(__file__).parent / "adapters" / "faulty.py")
MAJORITY = [sys.executable, "-m", "emerbench.adapters.majority"]


def _set(rng, labels, windows=2):
    y = np.repeat(np.asarray(labels), windows)
    units = [("s01", 1, t) for t in range(len(labels))]
    return SampleSet({"EEG": rng.standard_normal((y.size, 5)), "Peripheral": rng.standard_normal((y.size, 3))},
                     y, units, np.repeat(np.arange(len(labels)), windows))


@pytest.fixture
def splits(rng):
    return {
        "train": _set(rng, [0, 0, 0, 1, 2, 2]),
        "val": _set(rng, [0, 1, 2]),
        "test": _set(rng, [2, 2, 1, 0], windows=3),
    }


def _faulty(mode, *extra):
    return [sys.executable, FAULTY, mode, *extra]


def test_majority_adapter_scores_majority_share(splits):
    run = adapter_run(MAJORITY, splits, n_classes=3)
    assert run.selected_epoch == 1
    np.testing.assert_array_equal(run.test_predictions, np.zeros(12, int))
    m, _ = confusion_metrics(run.test_predictions, splits["test"].y, 3)
    assert m.accuracy == pytest.approx(np.mean(splits["test"].y == 0))


def test_engine_selects_epoch_and_announces_it(splits):
    run = adapter_run(_faulty("ok"), splits, n_classes=3)
    assert [h.val_f1 for h in run.history] == [0.3, 0.7, 0.7, 0.5]
    assert run.selected_epoch == 2
    predict = [json.loads(line) for d, line in run.transcript if d == "send" and '"predict"' in line]
    assert predict[0]["epoch"] == 2


def test_test_labels_never_reach_the_adapter(splits, tmp_path):
    spy = tmp_path / "spy.jsonl"
    adapter_run(_faulty("ok", str(spy)), splits, n_classes=3)
    seen = [json.loads(line) for line in spy.read_text().splitlines()]
    kinds = [s["msg"]["type"] for s in seen]
    assert kinds == ["init", "fit", "predict", "shutdown"]
    fit = seen[1]["msg"]
    assert "labels" in fit["train"] and "labels" in fit["val"]
    assert "labels" not in seen[2]["msg"]["test"]
    for s in seen:
        assert not any(f.startswith("test_labels") for f in s["files"])


def test_wrong_prediction_count(splits):
    with pytest.raises(ProtocolViolation, match="expected 12 predictions, got 11"):
        adapter_run(_faulty("short"), splits, n_classes=3)


def test_hang_times_out(splits):
    start = time.monotonic()
    with pytest.raises(AdapterTimeout):
        adapter_run(_faulty("hang"), splits, AdapterConfig(timeout=1.0), n_classes=3)
    assert time.monotonic() - start < 15


def test_stopped_process_times_out(splits):
    def freeze(session):
        os.kill(session.proc.pid, signal.SIGSTOP)

    with pytest.raises(AdapterTimeout):
        adapter_run(MAJORITY, splits, AdapterConfig(timeout=1.0), n_classes=3, session_hook=freeze)


def test_crash_reports_status_and_stderr(splits):
    with pytest.raises(NonZeroExit) as info:
        adapter_run(_faulty("crash"), splits, n_classes=3)
    assert "status 3" in str(info.value)
    assert "RuntimeError: out of memory" in info.value.stderr_tail
    assert "out of memory" in str(info.value)


def test_error_message_surfaces(splits):
    with pytest.raises(ProtocolViolation, match="cannot parse features"):
        adapter_run(_faulty("error"), splits, n_classes=3)


def test_epochs_must_be_consecutive(splits):
    with pytest.raises(ProtocolViolation, match="numbered"):
        adapter_run(_faulty("skip_epoch"), splits, n_classes=3)


def test_missing_executable(splits):
    with pytest.raises(NonZeroExit, match="cannot start"):
        adapter_run(["/nonexistent/adapter"], splits, n_classes=3)
