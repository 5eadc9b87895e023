"""Benchmark orchestration: config, cached preprocessing, split, train, eval, report.

Every stage reads and writes persisted artifacts under the run's output
directory, so the CLI subcommands chain to exactly what ``run_benchmark``
produces::

    <output_dir>/data/            synthetic dataset (when the config has [synth])
    <output_dir>/features/        feature-store index
    <output_dir>/plans/seed<S>.tsv
    <output_dir>/runs/<model>/seed<S>/<unit>.json
    <output_dir>/eval.json
    <output_dir>/report.csv, report.md
    <output_dir>/run_manifest.json
"""
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .aux_features import eye_features, peripheral_features, precomputed_eye_passthrough
from .errors import ConfigError, EmerBenchError, ValidationError
from .metrics import confusion_metrics
from .models import AdapterConfig, LinearConfig, MlpConfig, adapter_run, cca_fuse, predict, train_linear_softmax, train_mlp
from .preproc import PreprocConfig, features_from_filtered, filtered_eeg, pca_suppress
from .report import RunResult, build_report, emit_report
from .signal_model import EyePayload, ModalityKind, load_trial, validate_manifest
from .splits import SplitPlan, SplitRatio, Task, make_plan, materialize
from .store import FeatureStore, load_tensor, save_tensor
from .synth import SynthSpec, generate_synthetic

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

CACHE_ENV = "EMERBENCH_CACHE"
FEATURE_VERSION = "de-v1"
MODEL_IDS = ("linear", "mlp", "adapter")
FUSIONS = ("concat", "cca")


@dataclass(frozen=True)
class ModelSpec:
    id: str
    name: str
    fusion: str = "concat"
    cca_components: int = 8
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {"id": self.id, "name": self.name, "fusion": self.fusion, "cca_components": self.cca_components, **self.params}


@dataclass(frozen=True)
class RunConfig:
    output_dir: Path
    models: tuple
    seeds: tuple
    task: Task = Task.SD
    manifest: Path = None
    synth: SynthSpec = None
    preproc: PreprocConfig = PreprocConfig()
    ratio: SplitRatio = SplitRatio()
    stratify: bool = True
    workers: int = 1
    cache_dir: Path = None
    source_text: str = ""

    def manifest_path(self) -> Path:
        return self.manifest if self.manifest is not None else self.output_dir / "data" / "manifest.toml"

    def cache_root(self) -> Path:
        return self.cache_dir if self.cache_dir is not None else self.output_dir / "cache"

    def digest(self) -> str:
        return hashlib.sha256(self.source_text.encode()).hexdigest()


_MODEL_PARAM_TYPES = {
    "linear": LinearConfig,
    "mlp": MlpConfig,
}


def _model_spec(raw, i):
    if not isinstance(raw, dict) or "id" not in raw:
        raise ConfigError(f"models[{i}] needs an id")
    raw = dict(raw)
    mid = raw.pop("id")
    if mid not in MODEL_IDS:
        raise ConfigError(f"models[{i}]: unknown model id {mid!r} (known: {', '.join(MODEL_IDS)})")
    name = str(raw.pop("name", mid))
    fusion = raw.pop("fusion", "concat")
    if fusion not in FUSIONS:
        raise ConfigError(f"models[{i}]: fusion must be one of {FUSIONS}, got {fusion!r}")
    k = int(raw.pop("cca_components", 8))
    if mid == "adapter":
        cmd = raw.get("command")
        if not isinstance(cmd, list) or not cmd or not all(isinstance(c, str) for c in cmd):
            raise ConfigError(f"models[{i}]: adapter needs command = [program, args...]")
        unknown = set(raw) - {"command", "timeout"}
    else:
        # the run seed drives initialisation; a per-model seed is not accepted
        unknown = (set(raw) - set(_MODEL_PARAM_TYPES[mid].__dataclass_fields__)) | ({"seed"} & set(raw))
    if unknown:
        raise ConfigError(f"models[{i}] ({mid}): unknown parameter(s) {sorted(unknown)}")
    if "hidden" in raw:
        raw["hidden"] = list(raw["hidden"])
    return ModelSpec(mid, name, fusion, k, raw)


def load_config(path, seed_override=None, workers=None, cache_dir=None) -> RunConfig:
    """Parse and validate a run configuration; raises ``ConfigError`` before any computation."""
    path = Path(path)
    try:
        text = path.read_text()
        doc = tomllib.loads(text)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    base = path.parent
    known = {"manifest", "synth", "task", "seeds", "output_dir", "workers", "cache_dir", "split", "preproc", "models"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config key(s) {sorted(unknown)}")
    models_raw = doc.get("models", [])
    if not models_raw:
        raise ConfigError("config declares no models")
    models = tuple(_model_spec(m, i) for i, m in enumerate(models_raw))
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise ConfigError(f"model names must be unique, got {names}")
    seeds = doc.get("seeds", [0])
    if seed_override is not None:
        seeds = list(seed_override)
    if not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        raise ConfigError("seeds must be a non-empty list of non-negative integers")
    try:
        task = Task(doc.get("task", Task.SD.value))
    except ValueError:
        raise ConfigError(f"task must be SubjectDependent or SubjectIndependent, got {doc.get('task')!r}") from None
    if ("manifest" in doc) == ("synth" in doc):
        raise ConfigError("config needs exactly one of manifest = <path> or a [synth] table")
    try:
        synth = SynthSpec(**doc["synth"]) if "synth" in doc else None
        preproc = PreprocConfig.from_dict(doc.get("preproc", {}))
        split = dict(doc.get("split", {}))
        ratio = SplitRatio.parse(split.pop("ratio", "3:1:1"))
        stratify = bool(split.pop("stratify", True))
        if split:
            raise ConfigError(f"unknown [split] key(s) {sorted(split)}")
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    output_dir = (base / doc.get("output_dir", "out")).resolve()
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
        probe = output_dir / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {output_dir} is not writable: {exc}") from exc
    if cache_dir is None:
        cache_dir = os.environ.get(CACHE_ENV) or doc.get("cache_dir")
        if cache_dir is not None:
            cache_dir = base / cache_dir
    workers = int(workers if workers is not None else doc.get("workers", 1))
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    return RunConfig(
        output_dir=output_dir,
        models=models,
        seeds=tuple(seeds),
        task=task,
        manifest=(base / doc["manifest"]).resolve() if "manifest" in doc else None,
        synth=synth,
        preproc=preproc,
        ratio=ratio,
        stratify=stratify,
        workers=workers,
        cache_dir=Path(cache_dir).resolve() if cache_dir is not None else None,
        source_text=text,
    )


def _pmap(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- stage: data ---------------------------------------------------------------

def ensure_dataset(config: RunConfig):
    """Generate the synthetic dataset if the config asks for one and it is absent."""
    path = config.manifest_path()
    if config.synth is not None:
        stamp = path.parent / "synth_spec.json"
        want = json.dumps(config.synth.to_dict(), sort_keys=True)
        if not path.exists() or not stamp.exists() or stamp.read_text() != want:
            generate_synthetic(config.synth, path.parent, overwrite=True)
            stamp.write_text(want)
    return validate_manifest(path)


# -- stage: preprocess ------------------------------------------------------------

def _file_digest(path, _memo={}):
    st = os.stat(path)
    key = (str(path), st.st_size, st.st_mtime_ns)
    if key not in _memo:
        h = hashlib.sha256()
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
        _memo[key] = h.hexdigest()
    return _memo[key]


def _trial_digest(recordings, entry, preproc):
    doc = {
        "engine": FEATURE_VERSION,
        "preproc": preproc.to_dict(),
        "modalities": [
            {"kind": m.name, "rate": m.sample_rate, "channels": list(m.channel_names),
             "payload": m.payload.value if m.payload else None}
            for m in recordings.modalities
        ],
        "signals": {k: _file_digest(p) for k, p in sorted(entry.signals.items())},
        "baseline": {k: _file_digest(p) for k, p in sorted(entry.baseline.items())},
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def _aux_tensor(mod, payload, preproc, n_windows, origin):
    if mod.kind is ModalityKind.PERIPHERAL:
        t = peripheral_features(payload, mod.sample_rate, preproc.window_seconds, list(mod.channel_names), origin)
    elif mod.payload is EyePayload.RAW:
        t = eye_features(payload, preproc.window_seconds, n_windows, origin)
    else:
        t = precomputed_eye_passthrough(np.asarray(payload).T, n_windows, preproc.window_seconds, list(mod.channel_names), origin)
    return t


def _align(tensors, origin):
    counts = {m: t.n_windows for m, t in tensors.items()}
    n = min(counts.values())
    if len(set(counts.values())) > 1:
        log.warning("%s: window counts differ %s, truncating to %d", origin, counts, n)
        for t in tensors.values():
            t.values = t.values[:n]
            t.floored = t.floored[:n]
    return tensors


def _compute_unit(job):
    """Features for one trial (``pca_scope='trial'``) or one session (``'session'``)."""
    recordings, entries, preproc = job
    eeg = recordings.modality("EEG")
    trials = [load_trial(recordings, e) for e in entries]
    filtered = [filtered_eeg(t, preproc, eeg.sample_rate) for t in trials]
    if np.isfinite(preproc.pca_kurtosis_threshold):
        if preproc.pca_scope == "session":
            bounds = np.cumsum([0] + [f.shape[1] for f in filtered])
            cleaned, _ = pca_suppress(np.hstack(filtered), preproc.pca_kurtosis_threshold)
            filtered = [cleaned[:, a:b] for a, b in zip(bounds[:-1], bounds[1:])]
        else:
            filtered = [pca_suppress(f, preproc.pca_kurtosis_threshold)[0] for f in filtered]
    out = []
    for entry, trial, x in zip(entries, trials, filtered):
        origin = (entry.subject, entry.session, entry.trial_id)
        tensors = {"EEG": features_from_filtered(x, preproc, eeg.sample_rate, list(eeg.channel_names), origin + ("EEG",))}
        n_win = tensors["EEG"].n_windows
        for mod in recordings.modalities:
            if mod.kind is not ModalityKind.EEG:
                tensors[mod.name] = _aux_tensor(mod, trial.signals[mod.name], preproc, n_win, origin + (mod.name,))
        out.append(_align(tensors, origin))
    return out


def preprocess(config: RunConfig, recordings=None):
    """Compute (or fetch from cache) every unit's features; returns ``(store, stats)``."""
    recordings = recordings or ensure_dataset(config)
    if "EEG" not in {m.name for m in recordings.modalities}:
        raise ValidationError("dataset has no EEG modality")
    cache = config.cache_root() / "features"
    cache.mkdir(parents=True, exist_ok=True)
    preproc = config.preproc
    digests = {e.key: _trial_digest(recordings, e, preproc) for e in recordings.entries()}
    if preproc.pca_scope == "session":
        # a session-level PCA ties every trial to its whole session
        for key, group in recordings.trials.items():
            joint = hashlib.sha256("".join(digests[e.key] for e in group).encode()).hexdigest()
            for e in group:
                digests[e.key] = hashlib.sha256((joint + digests[e.key]).encode()).hexdigest()
    names = [m.name for m in recordings.modalities]

    def cached(entry):
        d = cache / digests[entry.key]
        return all((d / f"{m}.json").exists() and (d / f"{m}.emrc").exists() for m in names)

    if preproc.pca_scope == "session":
        jobs = [(recordings, group, preproc) for _, group in sorted(recordings.trials.items())
                if not all(cached(e) for e in group)]
    else:
        jobs = [(recordings, [e], preproc) for e in recordings.entries() if not cached(e)]
    misses = sum(len(j[1]) for j in jobs)
    for entries, results in zip([j[1] for j in jobs], _pmap(_compute_unit, jobs, config.workers)):
        for entry, tensors in zip(entries, results):
            d = cache / digests[entry.key]
            d.mkdir(parents=True, exist_ok=True)
            for m, t in tensors.items():
                save_tensor(d / m, t)
    store = FeatureStore(recordings.dataset_name, recordings.n_classes, names)
    for entry in recordings.entries():
        d = cache / digests[entry.key]
        paths = {m: d / m for m in names}
        store.add(entry.key, {m: load_tensor(p) for m, p in paths.items()}, entry.label_index, paths)
    store.write_index(config.output_dir / "features")
    n = len(digests)
    log.info("preprocess: %d units, %d cache hits, %d computed", n, n - misses, misses)
    return store, {"units": n, "cache_hits": n - misses, "computed": misses}


def load_store(config: RunConfig) -> FeatureStore:
    index = config.output_dir / "features"
    if not (index / "index.json").exists():
        raise ValidationError(f"no feature store at {index}; run the preprocess stage first")
    return FeatureStore.load(index)


# -- stage: split ----------------------------------------------------------------

def plan_path(config, seed) -> Path:
    return config.output_dir / "plans" / f"seed{seed}.tsv"


def split(config: RunConfig, store=None) -> dict:
    store = store or load_store(config)
    plans = {}
    for seed in config.seeds:
        plan = make_plan(store.groups(), config.task, config.ratio, seed, config.stratify)
        path = plan_path(config, seed)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(plan.dumps())
        plans[seed] = plan
    return plans


# -- stage: train ------------------------------------------------------------------

def _fuse(spec, sets, modalities):
    if spec.fusion == "concat":
        return {name: np.hstack([s.X[m] for m in modalities]) for name, s in sets.items()}
    if len(modalities) != 2:
        raise ValidationError(f"CCA fusion needs exactly two modalities, got {modalities}")
    a, b = modalities
    k = min(spec.cca_components, sets["train"].X[a].shape[1], sets["train"].X[b].shape[1])
    proj = cca_fuse(sets["train"].X[a], sets["train"].X[b], k)
    return {name: proj.transform(s.X[a], s.X[b]) for name, s in sets.items()}


def _train_job(job):
    spec, seed, task, unit, sets, modalities, n_classes = job
    if spec.id == "adapter":
        cfg = AdapterConfig(timeout=float(spec.params.get("timeout", 60.0)), task=task.value, seed=seed)
        run = adapter_run(spec.params["command"], sets, cfg, n_classes, model_id=spec.name)
        preds = run.test_predictions
    else:
        fused = _fuse(spec, sets, modalities)
        train_xy = (fused["train"], sets["train"].y)
        val_xy = (fused["val"], sets["val"].y)
        params = {k: (tuple(v) if k == "hidden" else v) for k, v in spec.params.items()}
        if spec.id == "linear":
            run = train_linear_softmax(train_xy, val_xy, LinearConfig(seed=seed, **params), n_classes)
        else:
            run = train_mlp(train_xy, val_xy, MlpConfig(seed=seed, **params), n_classes)
        run.model_id = spec.name
        preds = predict(run, fused["test"])
    return {
        "unit": unit,
        "model": spec.to_dict(),
        "predictions": [int(p) for p in preds],
        "labels": [int(v) for v in sets["test"].y],
        "run": run.to_dict(),
    }


def train(config: RunConfig, store=None, plans=None) -> list:
    store = store or load_store(config)
    if plans is None:
        plans = {s: SplitPlan.loads(plan_path(config, s).read_text()) for s in config.seeds}
    modalities = list(store.modalities)
    jobs = []
    for spec in config.models:
        for seed in config.seeds:
            plan = plans[seed]
            parts = [(g, plan.restricted_to(g)) for g in plan.groups()] if config.task is Task.SD else [(None, plan)]
            for group, sub in parts:
                unit = f"{group[0]}_s{group[1]}" if group else "fold"
                sets = materialize(sub, store, modalities)
                jobs.append((spec, seed, config.task, unit, sets, modalities, store.n_classes))
    results = _pmap(_train_job, jobs, config.workers)
    written = []
    for job, res in zip(jobs, results):
        spec, seed, _, unit = job[:4]
        path = config.output_dir / "runs" / spec.name / f"seed{seed}" / f"{unit}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(res, sort_keys=True, indent=1) + "\n")
        written.append(path)
    return written


# -- stage: eval / report --------------------------------------------------------------

def evaluate(config: RunConfig, n_classes=None) -> list:
    """Score saved predictions; writes ``eval.json`` and returns ``RunResult``s."""
    if n_classes is None:
        n_classes = load_store(config).n_classes
    dataset = json.loads((config.output_dir / "features" / "index.json").read_text())["dataset_name"]
    results = []
    for spec in config.models:
        for seed in config.seeds:
            d = config.output_dir / "runs" / spec.name / f"seed{seed}"
            files = sorted(d.glob("*.json"))
            if not files:
                raise ValidationError(f"no saved predictions under {d}; run the train stage first")
            units = []
            for f in files:
                saved = json.loads(f.read_text())
                metrics, _ = confusion_metrics(saved["predictions"], saved["labels"], n_classes)
                units.append((saved["unit"], metrics))
            results.append(RunResult(spec.name, dataset, config.task.value, seed, units))
    doc = {"runs": [r.to_dict() for r in results]}
    (config.output_dir / "eval.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    return results


def report(config: RunConfig, formats=("csv", "md")):
    path = config.output_dir / "eval.json"
    if not path.exists():
        raise ValidationError(f"{path} not found; run the eval stage first")
    runs = [RunResult.from_dict(d) for d in json.loads(path.read_text())["runs"]]
    return emit_report(build_report(runs), config.output_dir, formats)


def write_run_manifest(config: RunConfig, outputs):
    outs = {}
    for p in sorted(set(outputs)):
        outs[Path(p).relative_to(config.output_dir).as_posix()] = _file_digest(p)
    doc = {
        "engine_version": __version__,
        "config_sha256": config.digest(),
        "task": config.task.value,
        "seeds": list(config.seeds),
        "models": [m.to_dict() for m in config.models],
        "preproc": config.preproc.to_dict(),
        "split_ratio": str(config.ratio),
        "synth": config.synth.to_dict() if config.synth else None,
        "outputs": outs,
    }
    path = config.output_dir / "run_manifest.json"
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    return path


def _staged(stage, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except EmerBenchError as exc:
        exc.stage = exc.stage or stage
        raise


def run_benchmark(config: RunConfig, formats=("csv", "md")) -> dict:
    """ingest -> preprocess (cached) -> split -> train/select -> evaluate -> report."""
    recordings = _staged("ingest", ensure_dataset, config)
    store, stats = _staged("preprocess", preprocess, config, recordings)
    plans = _staged("split", split, config, store)
    run_files = _staged("train", train, config, store, plans)
    _staged("eval", evaluate, config, store.n_classes)
    reports = _staged("report", report, config, formats)
    outputs = [plan_path(config, s) for s in config.seeds] + run_files + [config.output_dir / "eval.json"] + reports
    manifest = write_run_manifest(config, outputs)
    return {"preprocess": stats, "reports": reports, "run_manifest": manifest}
