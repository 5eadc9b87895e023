"""Command-line entry point.

Exit status: 0 on success, 1 for invalid input or configuration, 2 for
runtime failures (I/O, numerical, adapter).
"""
import argparse
import json
import logging
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, pipeline
from .errors import ValidationError
from .synth import SynthSpec, generate_synthetic

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
FORMATS = {"csv": ("csv",), "md": ("md",), "both": ("csv", "md")}


def _seed_list(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="emerbench", description="Multimodal emotion-recognition benchmark engine.")
    p.add_argument("--version", action="version", version=f"emerbench {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset with a manifest")
    s.add_argument("--out", required=True, type=Path, help="target directory")
    s.add_argument("--spec", type=Path, help="TOML file with SynthSpec fields")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one SynthSpec field")
    s.add_argument("--overwrite", action="store_true")

    staged = {
        "preprocess": "compute (or reuse cached) feature tensors",
        "split": "write split plans, one per seed",
        "train": "train every configured model on every split unit",
        "eval": "score saved predictions",
        "report": "write report.csv / report.md from eval.json",
        "run": "all stages end to end",
    }
    for name, text in staged.items():
        c = sub.add_parser(name, help=text)
        c.add_argument("--config", required=True, type=Path)
        c.add_argument("--workers", type=int)
        c.add_argument("--seed-override", type=_seed_list, metavar="S[,S...]")
        c.add_argument("--cache-dir", type=Path)
        if name in ("report", "run"):
            c.add_argument("--format", choices=sorted(FORMATS), default="both")
    return p


def _synth(args):
    fields = {}
    if args.spec:
        try:
            fields.update(tomllib.loads(args.spec.read_text()))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ValidationError(f"cannot read {args.spec}: {exc}") from exc
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            fields[key.strip()] = tomllib.loads(f"v = {value}")["v"]
        except tomllib.TOMLDecodeError:
            fields[key.strip()] = value
    try:
        spec = SynthSpec(**fields)
    except TypeError as exc:
        raise ValidationError(str(exc)) from exc
    path = generate_synthetic(spec, args.out, overwrite=args.overwrite)
    print(path)


def _staged(args):
    config = pipeline.load_config(args.config, args.seed_override, args.workers, args.cache_dir)
    formats = FORMATS[getattr(args, "format", "both")]
    cmd = args.command
    if cmd == "run":
        out = pipeline.run_benchmark(config, formats)
        for path in out["reports"]:
            print(path)
        print(out["run_manifest"])
    elif cmd == "preprocess":
        recordings = pipeline._staged("ingest", pipeline.ensure_dataset, config)
        _, stats = pipeline._staged("preprocess", pipeline.preprocess, config, recordings)
        print(json.dumps(stats, sort_keys=True))
    elif cmd == "split":
        plans = pipeline._staged("split", pipeline.split, config)
        for seed in plans:
            print(pipeline.plan_path(config, seed))
    elif cmd == "train":
        for path in pipeline._staged("train", pipeline.train, config):
            print(path)
    elif cmd == "eval":
        pipeline._staged("eval", pipeline.evaluate, config)
        print(config.output_dir / "eval.json")
    elif cmd == "report":
        for path in pipeline._staged("report", pipeline.report, config, formats):
            print(path)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            _synth(args)
        else:
            _staged(args)
    except ValidationError as exc:
        stage = f"[{exc.stage}] " if exc.stage else ""
        print(f"emerbench: error: {stage}{exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # every other failure is a runtime error
        stage = f"[{exc.stage}] " if getattr(exc, "stage", None) else ""
        # adapter errors already carry the child's stderr tail in the message
        print(f"emerbench: error: {stage}{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
