"""Evaluation reports: aggregation over units, rank-sum scores, CSV + Markdown."""
import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyInput, IoFailure
from .metrics import MetricPair, aggregate, rank_scores

CSV_COLUMNS = ("method", "dataset", "task", "metric", "mean", "std", "n_units", "seed")
METRICS = (("accuracy", "ACC"), ("macro_f1", "F1"))
UNIT_KIND = {"SubjectDependent": "subject-session", "SubjectIndependent": "seed"}


@dataclass
class RunResult:
    """Per-unit test metrics of one (method, dataset, task, seed) run."""

    method: str
    dataset: str
    task: str
    seed: int
    units: list  # [(unit label, MetricPair)]

    def to_dict(self):
        return {
            "method": self.method,
            "dataset": self.dataset,
            "task": self.task,
            "seed": self.seed,
            "unit_kind": UNIT_KIND.get(self.task, "unit"),
            "units": [{"unit": u, **m.as_dict()} for u, m in self.units],
        }

    @classmethod
    def from_dict(cls, d):
        units = [(u["unit"], MetricPair(u["accuracy"], u["macro_f1"])) for u in d["units"]]
        return cls(d["method"], d["dataset"], d["task"], int(d["seed"]), units)


@dataclass(frozen=True)
class ReportRow:
    method: str
    dataset: str
    task: str
    metric: str
    mean: float
    std: float
    n_units: int
    seed: str


@dataclass
class EvalReport:
    rows: list
    scores: dict = field(default_factory=dict)  # task -> {method: score}

    def pooled(self):
        return [r for r in self.rows if r.seed == "all"]

    def cell(self, method, dataset, task, metric):
        for r in self.pooled():
            if (r.method, r.dataset, r.task, r.metric) == (method, dataset, task, metric):
                return r
        return None


def build_report(runs) -> EvalReport:
    """Aggregate run results per seed and pooled over seeds, then score per task."""
    runs = sorted(runs, key=lambda r: (r.task, r.dataset, r.method, r.seed))
    if not runs:
        raise EmptyInput("no run results to report")
    rows = []
    pooled = defaultdict(list)
    for run in runs:
        pooled[(run.method, run.dataset, run.task)].extend(m for _, m in run.units)
        for metric, _ in METRICS:
            mean, std = aggregate(getattr(m, metric) for _, m in run.units)
            rows.append(ReportRow(run.method, run.dataset, run.task, metric, mean, std, len(run.units), str(run.seed)))
    for (method, dataset, task), pairs in sorted(pooled.items()):
        for metric, _ in METRICS:
            mean, std = aggregate(getattr(m, metric) for m in pairs)
            rows.append(ReportRow(method, dataset, task, metric, mean, std, len(pairs), "all"))
    report = EvalReport(rows)
    for task in sorted({r.task for r in rows}):
        table = defaultdict(dict)
        for r in report.pooled():
            if r.task == task:
                table[r.method][(r.dataset, r.metric)] = r.mean
        report.scores[task] = rank_scores(dict(table))
    return report


def format_cell(mean, std) -> str:
    return f"{mean:.2f} ({std:.2f})"


def _csv_text(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.rows:
        w.writerow([r.method, r.dataset, r.task, r.metric, f"{r.mean:.10f}", f"{r.std:.10f}", r.n_units, r.seed])
    return buf.getvalue()


def _decorate(column):
    """Bold the best mean(s) and underline the second-best distinct mean."""
    distinct = sorted({round(v, 10) for v in column.values()}, reverse=True)
    marks = {}
    for method, v in column.items():
        if round(v, 10) == distinct[0]:
            marks[method] = "bold"
        elif len(distinct) > 1 and round(v, 10) == distinct[1]:
            marks[method] = "underline"
    return marks


def _markdown_text(report):
    out = ["# Benchmark report", ""]
    for task in sorted(report.scores):
        rows = [r for r in report.pooled() if r.task == task]
        datasets = sorted({r.dataset for r in rows})
        methods = sorted({r.method for r in rows})
        cols = [(d, m, short) for d in datasets for m, short in METRICS]
        out += [f"## {task}", ""]
        out.append("| Method | " + " | ".join(f"{d} {short}" for d, _, short in cols) + " | Score |")
        out.append("|---" * (len(cols) + 2) + "|")
        cells = {}
        for d, metric, _ in cols:
            column = {}
            for method in methods:
                r = report.cell(method, d, task, metric)
                if r is not None:
                    column[method] = r.mean
            marks = _decorate(column) if column else {}
            for method in methods:
                r = report.cell(method, d, task, metric)
                if r is None:
                    text = "-"
                else:
                    text = format_cell(100 * r.mean, 100 * r.std)
                    if marks.get(method) == "bold":
                        text = f"**{text}**"
                    elif marks.get(method) == "underline":
                        text = f"<u>{text}</u>"
                cells[(method, d, metric)] = text
        for method in methods:
            score = report.scores[task].get(method)
            score_text = "-" if score is None else f"{score:g}"
            out.append(f"| {method} | " + " | ".join(cells[(method, d, m)] for d, m, _ in cols) + f" | {score_text} |")
        unit = UNIT_KIND.get(task, "unit")
        n = sorted({r.n_units for r in rows})
        out += ["", f"Cells: mean (std) in %, std over {unit} units (n = {', '.join(map(str, n))}), population convention.", ""]
    return "\n".join(out)


def emit_report(report: EvalReport, out_dir, formats=("csv", "md")):
    """Write ``report.csv`` and/or ``report.md``; returns the written paths."""
    if not report.rows:
        raise EmptyInput("report is empty")
    out_dir = Path(out_dir)
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if "csv" in formats:
            path = out_dir / "report.csv"
            path.write_text(_csv_text(report))
            written.append(path)
        if "md" in formats:
            path = out_dir / "report.md"
            path.write_text(_markdown_text(report))
            written.append(path)
    except OSError as exc:
        raise IoFailure(f"cannot write report to {out_dir}: {exc}") from exc
    return written
