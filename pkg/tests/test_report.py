import csv
import io

import pytest

from emerbench.errors import EmptyInput, IoFailure
from emerbench.metrics import MetricPair
from emerbench.report import CSV_COLUMNS, RunResult, build_report, emit_report, format_cell


def _run(method, seed, accs, task="SubjectDependent", dataset="synth"):
    return RunResult(method, dataset, task, seed, [(f"u{i}", MetricPair(a, a / 2)) for i, a in enumerate(accs)])


def test_cell_format():
    assert format_cell(81.0312, 20.2391) == "81.03 (20.24)"
    assert format_cell(100.0, 0.0) == "100.00 (0.00)"


def test_pooled_and_per_seed_rows():
    report = build_report([_run("A", 0, [1.0, 0.0]), _run("A", 1, [0.5, 0.5])])
    pooled = report.cell("A", "synth", "SubjectDependent", "accuracy")
    assert (pooled.mean, pooled.n_units, pooled.seed) == (0.5, 4, "all")
    assert pooled.std == pytest.approx(0.125 ** 0.5)  # population std of [1, 0, .5, .5]
    per_seed = [r for r in report.rows if r.seed == "0" and r.metric == "accuracy"]
    assert (per_seed[0].mean, per_seed[0].std) == (0.5, 0.5)


def test_scores_per_task():
    runs = [_run("A", 0, [0.9]), _run("B", 0, [0.6]), _run("C", 0, [0.3]),
            _run("A", 0, [0.2], task="SubjectIndependent"), _run("B", 0, [0.7], task="SubjectIndependent")]
    report = build_report(runs)
    assert report.scores["SubjectDependent"] == {"A": 6.0, "B": 4.0, "C": 2.0}
    assert report.scores["SubjectIndependent"] == {"A": 2.0, "B": 4.0}


def test_markdown_marks(tmp_path):
    report = build_report([_run("A", 0, [0.9]), _run("B", 0, [0.6]), _run("C", 0, [0.3])])
    emit_report(report, tmp_path, ("md",))
    md = (tmp_path / "report.md").read_text()
    assert "| A | **90.00 (0.00)** | **45.00 (0.00)** | 6 |" in md
    assert "| B | <u>60.00 (0.00)</u> | <u>30.00 (0.00)</u> | 4 |" in md
    assert "| C | 30.00 (0.00) | 15.00 (0.00) | 2 |" in md
    assert "subject-session units" in md


def test_single_method_has_no_underline(tmp_path):
    emit_report(build_report([_run("A", 0, [0.8, 0.6])]), tmp_path)
    md = (tmp_path / "report.md").read_text()
    assert "<u>" not in md and "**70.00 (10.00)**" in md


def test_emission_is_byte_identical(tmp_path):
    runs = [_run("B", 1, [0.3, 0.4]), _run("A", 0, [0.9, 0.1]), _run("A", 1, [0.7, 0.2])]
    emit_report(build_report(runs), tmp_path / "x")
    emit_report(build_report(list(reversed(runs))), tmp_path / "y")
    for name in ("report.csv", "report.md"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()


def test_csv_columns(tmp_path):
    emit_report(build_report([_run("A", 3, [0.5, 1.0])]), tmp_path, ("csv",))
    rows = list(csv.reader(io.StringIO((tmp_path / "report.csv").read_text())))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 1 + 4
    assert {r[7] for r in rows[1:]} == {"3", "all"}
    assert not (tmp_path / "report.md").exists()


def test_errors(tmp_path):
    with pytest.raises(EmptyInput):
        build_report([])
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(IoFailure):
        emit_report(build_report([_run("A", 0, [0.5])]), blocker / "out")


def test_result_round_trip():
    r = _run("A", 2, [0.25, 0.75], task="SubjectIndependent")
    d = r.to_dict()
    assert d["unit_kind"] == "seed"
    assert RunResult.from_dict(d) == r
