"""Experiment configuration: one JSON document drives a whole run."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..core import ConfigError

STAGES = ("generate", "featurize", "split", "train", "eval", "explain", "hawkes-fit", "attack", "defend")

# Input paths a config may declare; anything a stage reads comes from here or
# from artifacts written earlier in the same run.
INPUT_KEYS = ("dataset", "records", "events", "sequences", "model", "splits")

_BLOCK_KEYS = {
    "generate": {"graphs", "sequences", "hawkes"},
    "featurize": set(),
    "split": {"kind", "fractions", "normalize", "edge_fraction"},
    "train": {"task", "lr", "epochs", "layers", "hidden", "label_columns", "negative_ratio", "rnn"},
    "eval": {"split"},
    "explain": {"repeats", "metric", "split", "graph_index", "budget"},
    "hawkes-fit": {"beta", "l1", "step", "max_iter", "tol", "mu_min", "tau", "top_k"},
    "attack": {"graph_index", "max_candidates", "top_k", "outcome", "opportunities", "budget"},
    "defend": {"graph_index", "removals", "additions", "outcome"},
}


@dataclass
class ExperimentConfig:
    stages: list[str]
    seed: int
    blocks: dict[str, dict] = field(default_factory=dict)
    inputs: dict[str, str] = field(default_factory=dict)
    out: str = "run"

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(doc) - {"stages", "seed", "inputs", "out", *STAGES}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        blocks = {s: copy.deepcopy(doc[s]) for s in STAGES if s in doc}
        return cls(stages=list(doc.get("stages", [])), seed=doc.get("seed"), blocks=blocks,
                   inputs=dict(doc.get("inputs", {})), out=doc.get("out", "run"))

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path}: line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        doc: dict[str, Any] = {"stages": list(self.stages), "seed": self.seed}
        if self.inputs:
            doc["inputs"] = dict(sorted(self.inputs.items()))
        for s in STAGES:
            if s in self.blocks:
                doc[s] = self.blocks[s]
        return doc

    def block(self, stage: str) -> dict:
        return self.blocks.get(stage) or {}

    def hash(self) -> str:
        """sha256 of the canonical JSON form (output directory excluded)."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def validate(self) -> "ExperimentConfig":
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        if not self.stages:
            raise ConfigError("no stages listed")
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise ConfigError(f"unknown stages: {bad}")
        if len(set(self.stages)) != len(self.stages):
            raise ConfigError("a stage is listed twice")
        if self.stages != sorted(self.stages, key=STAGES.index):
            raise ConfigError(f"stages must follow the order {list(STAGES)}")
        unknown_inputs = set(self.inputs) - set(INPUT_KEYS)
        if unknown_inputs:
            raise ConfigError(f"unknown input paths: {sorted(unknown_inputs)}")
        for stage, blk in self.blocks.items():
            if not isinstance(blk, dict):
                raise ConfigError(f"block {stage!r} must be an object")
            extra = set(blk) - _BLOCK_KEYS[stage]
            if extra:
                raise ConfigError(f"{stage}: unknown keys {sorted(extra)}")
        self._check_dependencies()
        return self

    def _check_dependencies(self):
        gen = self.block("generate") if "generate" in self.stages else {}
        have = {
            "dataset": "graphs" in gen or "featurize" in self.stages or "dataset" in self.inputs
                       or "splits" in self.inputs,
            "sequences": "sequences" in gen or "sequences" in self.inputs,
            "events": "hawkes" in gen or "events" in self.inputs,
            "model": "train" in self.stages or "model" in self.inputs,
        }
        if "generate" in self.stages and not gen:
            raise ConfigError("generate: block must request graphs, sequences or hawkes")
        if "featurize" in self.stages and "records" not in self.inputs:
            raise ConfigError("featurize requires inputs.records (a directory of record tables)")
        if "split" in self.stages and not have["dataset"]:
            raise ConfigError("split requires a dataset (generate.graphs, featurize or inputs.dataset)")
        if "train" in self.stages:
            rnn = "rnn" in self.block("train")
            if not have["dataset"] and not (rnn and have["sequences"]):
                raise ConfigError("train requires a dataset (generate.graphs, featurize or inputs.dataset)")
            if rnn and not have["sequences"]:
                raise ConfigError("train.rnn requires sequences (generate.sequences or inputs.sequences)")
        for stage in ("eval", "explain", "attack", "defend"):
            if stage in self.stages:
                if not have["model"]:
                    raise ConfigError(f"{stage} requires a model (train stage or inputs.model)")
                if not have["dataset"]:
                    raise ConfigError(f"{stage} requires a dataset (generate.graphs, featurize or inputs.dataset)")
        if "hawkes-fit" in self.stages and not have["events"]:
            raise ConfigError("hawkes-fit requires events (generate.hawkes or inputs.events)")
