"""Command-line entry point.

``polifeat run --config exp.json`` executes a whole experiment.  The stage
subcommands run a single stage into ``--out``; inputs not given by flag or
config are picked up from artifacts already in that directory and recorded
as declared inputs in the manifest.

Exit codes: 0 success, 2 configuration or validation error, 3 numeric or
runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..core import ConfigError, NumericFailure, PolifeatError
from ..serialize import sha256_file, write_text_atomic
from .config import INPUT_KEYS, STAGES, ExperimentConfig
from .pipeline import MANIFEST, StageFailure, json_text, run
from .report import write_report

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

# artifact file that satisfies each input when it already sits in --out
_DISCOVER = {"dataset": "dataset.jsonl", "events": "events.jsonl", "sequences": "sequences.jsonl",
             "model": "model.json", "splits": "train.jsonl"}
_NEEDS = {"split": ("dataset",), "train": ("dataset", "splits", "sequences"),
          "eval": ("model", "dataset", "splits"), "explain": ("model", "dataset", "splits"),
          "hawkes-fit": ("events",), "attack": ("model", "dataset", "splits"),
          "defend": ("model", "dataset", "splits")}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="polifeat", description="Featurize, learn on and audit synthetic "
                                "political networks, event sequences and point processes.")
    sub = p.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        sp = sub.add_parser(stage, parents=[common], help=f"run the {stage} stage")
        for key in INPUT_KEYS:
            sp.add_argument(f"--{key}", type=Path, help=f"input path for {key}")
    sub.add_parser("run", parents=[common], help="run every stage listed in the config")
    rp = sub.add_parser("report", parents=[common], help="summarize a finished run")
    rp.add_argument("--dest", type=Path, help="report directory (default OUT/report)")
    rp.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    return p


def _load_doc(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path}: line {exc.lineno}: {exc.msg}") from None


def _stage_config(args, doc: dict) -> tuple[ExperimentConfig, Path]:
    doc = dict(doc)
    doc["stages"] = [args.command]
    if args.command == "generate" and "generate" not in doc:
        doc["generate"] = {"graphs": {}}
    doc.setdefault("seed", 0)
    if args.seed is not None:
        doc["seed"] = args.seed
    out = args.out or Path(doc.get("out", "run"))
    inputs = dict(doc.get("inputs", {}))
    for key in INPUT_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            inputs[key] = str(val)
    for key in _NEEDS.get(args.command, ()):
        if key not in inputs and (out / _DISCOVER[key]).is_file():
            inputs[key] = str(out if key == "splits" else out / _DISCOVER[key])
    doc["inputs"] = inputs
    return ExperimentConfig.from_dict(doc), out


def _merge_previous(out: Path, manifest: dict):
    """Fold a single-stage run into the manifest already present in ``out``."""
    prev_path = out / f".{MANIFEST}.prev"
    if not prev_path.is_file():
        return manifest
    prev = json.loads(prev_path.read_text(encoding="utf-8"))
    prev_path.unlink()
    artifacts = {k: v for k, v in prev.get("artifacts", {}).items()
                 if k not in manifest["artifacts"] and (out / k).is_file()}
    artifacts.update(manifest["artifacts"])
    merged = dict(manifest)
    merged["artifacts"] = dict(sorted(artifacts.items()))
    merged["stages"] = prev.get("stages", []) + manifest["stages"]
    merged["inputs"] = {**prev.get("inputs", {}), **manifest["inputs"]}
    if merged["failed_stage"] is None:
        merged["failed_stage"] = prev.get("failed_stage")
    merged["artifacts"] = {k: v for k, v in merged["artifacts"].items() if sha256_file(out / k) == v}
    write_text_atomic(out / MANIFEST, json_text(merged))
    return merged


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            out = args.out or Path(_load_doc(args.config).get("out", "run"))
            for path in write_report(out, args.dest, figures=not args.no_figures):
                print(path)
            return EXIT_OK
        doc = _load_doc(args.config)
        if args.command == "run":
            if args.config is None:
                raise ConfigError("run needs --config")
            if args.seed is not None:
                doc["seed"] = args.seed
            cfg = ExperimentConfig.from_dict(doc)
            out = args.out or Path(cfg.out)
            manifest = run(cfg, out)
        else:
            cfg, out = _stage_config(args, doc)
            cfg.validate()
            existing = out / MANIFEST
            if existing.is_file():
                existing.replace(out / f".{MANIFEST}.prev")
            try:
                manifest = run(cfg, out)
            finally:
                if (out / MANIFEST).is_file():
                    manifest = json.loads((out / MANIFEST).read_text(encoding="utf-8"))
                    manifest = _merge_previous(out, manifest)
                elif (out / f".{MANIFEST}.prev").is_file():
                    (out / f".{MANIFEST}.prev").replace(existing)
        for name in manifest["artifacts"]:
            print(out / name)
        return EXIT_OK
    except StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        cause = exc.cause
        if isinstance(cause, PolifeatError) and not isinstance(cause, NumericFailure):
            return EXIT_CONFIG
        return EXIT_RUNTIME
    except NumericFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except PolifeatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
