"""Stage execution and the run manifest.

Artifacts are written atomically into the output directory; the manifest
records their sha256 digests, per-stage wall time, declared inputs and
library versions.  A stage that raises has its files renamed with a
``.partial`` suffix and is named in the manifest before the error propagates.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import platform
import time
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .. import __version__
from ..core import ConfigError, GraphDataset
from ..featurize import SplitPolicy, build_graphs_from_records, load_records, normalize_features, split_dataset, \
    split_edges
from ..graphlearn import GraphModelParams, TrainConfig, evaluate, extract_substructure, holdout_pairs, \
    init_model, permutation_importance, train
from ..intervene import Opportunity, defend_minimax, nominate_jurisdiction, portfolio_select, \
    rank_edge_additions, rank_persuadable_nodes
from ..metrics import accuracy, auc
from ..ppnet import HawkesFitConfig, fit_hawkes, infer_edges, recovery_auc, top_k_threshold
from ..seqlearn import RnnParams, RnnTrainConfig, forward_rnn, init_rnn, train_rnn
from ..serialize import _jsonable, checkpoint_dumps, checkpoint_loads, dumps, load, sha256_file, \
    write_text_atomic
from ..synthgen import GraphGenConfig, HawkesParams, SeqGenConfig, gen_graph_dataset, gen_sequences, \
    simulate_hawkes
from .config import ExperimentConfig

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


class StageFailure(Exception):
    """A stage raised; ``manifest`` has already been written with the failure."""

    def __init__(self, stage: str, cause: BaseException, manifest: dict):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage, self.cause, self.manifest = stage, cause, manifest


def json_text(obj: Any) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"


def csv_text(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if r.get(c) is None else r[c] for c in columns])
    return buf.getvalue()


def versions() -> dict:
    import scipy
    return {"polifeat": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


class RunContext:
    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.state: dict[str, Any] = {}
        self.artifacts: dict[str, str] = {}
        self.inputs: dict[str, dict] = {}
        self._stage_files: list[str] = []

    @property
    def seed(self) -> int:
        return self.cfg.seed

    def write(self, name: str, text: str) -> Path:
        path = write_text_atomic(self.out / name, text)
        self._stage_files.append(name)
        self.artifacts[name] = sha256_file(path)
        return path

    def input_path(self, key: str) -> Path:
        path = Path(self.cfg.inputs[key])
        if key not in self.inputs:
            entry = {"path": str(path)}
            if path.is_file():
                entry["sha256"] = sha256_file(path)
            self.inputs[key] = entry
        return path

    def dataset(self) -> GraphDataset:
        if "dataset" not in self.state:
            self.state["dataset"] = load(self.input_path("dataset"))
        return self.state["dataset"]

    def model(self) -> GraphModelParams:
        if "model" not in self.state:
            kind, dims, flat = checkpoint_loads(self.input_path("model").read_text(encoding="utf-8"))
            if kind != "graphlearn":
                raise ConfigError(f"inputs.model holds a {kind!r} checkpoint, expected graphlearn")
            self.state["model"] = GraphModelParams.from_checkpoint(dims, flat)
            self.state["task"] = dims.get("task", "graph_label")
            self.state["label_columns"] = dims.get("label_columns")
            self.state["model_id"] = self.inputs["model"]["sha256"]
        return self.state["model"]

    def model_id(self) -> str:
        self.model()
        return self.state.get("model_id") or self.artifacts["model.json"]

    def dataset_id(self) -> str:
        if "dataset.jsonl" in self.artifacts:
            return self.artifacts["dataset.jsonl"]
        if "dataset" in self.cfg.inputs:
            self.dataset()
            return self.inputs["dataset"]["sha256"]
        return sha256_file(self.input_path("splits") / "test.jsonl")

    def splits(self) -> dict[str, GraphDataset] | None:
        if "splits" not in self.state and "splits" in self.cfg.inputs:
            root = self.input_path("splits")
            self.state["splits"] = {k: load(root / f"{k}.jsonl") for k in ("train", "val", "test")}
            pairs = root / "link_pairs.json"
            if pairs.is_file():
                self.state["link_pairs"] = json.loads(pairs.read_text(encoding="utf-8"))
        return self.state.get("splits")

    def eval_split(self, which: str | None) -> tuple[str, GraphDataset]:
        splits = self.splits()
        if splits is None:
            return "all", self.dataset()
        which = which or "test"
        if which not in splits:
            raise ConfigError(f"unknown split {which!r}")
        return which, splits[which]

    def link_pairs(self, which: str, ds: GraphDataset):
        lp = self.state.get("link_pairs")
        if lp is None or which not in lp:
            raise ConfigError("link task needs held-out pairs: set split.edge_fraction")
        return holdout_pairs(ds.graphs, lp[which]["positives"], lp[which]["negatives"])


# Stages -----------------------------------------------------------------

def _build(cls, opts: dict, what: str):
    try:
        obj = cls(**opts)
    except TypeError as exc:
        raise ConfigError(f"{what}: {exc}") from None
    if hasattr(obj, "validate"):
        obj.validate()
    return obj


def stage_generate(ctx: RunContext):
    blk = ctx.cfg.block("generate")
    if "graphs" in blk:
        gcfg = _build(GraphGenConfig, blk["graphs"], "generate.graphs")
        ctx.state["dataset"] = gen_graph_dataset(gcfg, ctx.seed)
        ctx.write("dataset.jsonl", dumps(ctx.state["dataset"]))
    if "sequences" in blk:
        opts = dict(blk["sequences"])
        count = int(opts.pop("count", 100))
        scfg = _build(SeqGenConfig, opts, "generate.sequences")
        ctx.state["sequences"] = gen_sequences(scfg, count, ctx.seed)
        ctx.write("sequences.jsonl", dumps(ctx.state["sequences"]))
    if "hawkes" in blk:
        h = blk["hawkes"]
        W = np.asarray(h["W"], dtype=np.float64)
        n = W.shape[0]
        mu = np.broadcast_to(np.asarray(h.get("mu", 0.1), dtype=np.float64), (n,)).copy()
        params = HawkesParams(mu, W, float(h.get("beta", 1.0)))
        params.validate()
        ctx.state["events"] = simulate_hawkes(params, float(h.get("T", 100.0)), ctx.seed,
                                              force=bool(h.get("force", False)))
        ctx.write("events.jsonl", dumps(ctx.state["events"]))


def stage_featurize(ctx: RunContext):
    records = load_records(ctx.input_path("records"))
    ctx.state["dataset"] = build_graphs_from_records(records)
    ctx.write("dataset.jsonl", dumps(ctx.state["dataset"]))


def stage_split(ctx: RunContext):
    blk = ctx.cfg.block("split")
    policy = SplitPolicy(blk.get("kind", "by_graph_random"), tuple(blk.get("fractions", (0.8, 0.1, 0.1))),
                         ctx.seed)
    parts = split_dataset(ctx.dataset(), policy)
    if blk.get("normalize", True):
        tr, rest, stats = normalize_features(parts[0], *parts[1:])
        parts = (tr, *rest)
        ctx.write("norm_stats.json", json_text(stats.to_json()))
    names = ("train", "val", "test")
    if blk.get("edge_fraction"):
        pairs = {}
        observed = []
        for name, ds in zip(names, parts):
            ho = split_edges(ds, float(blk["edge_fraction"]), ctx.seed)
            observed.append(ho.observed)
            pairs[name] = {"positives": [p.tolist() for p in ho.positives],
                           "negatives": [q.tolist() for q in ho.negatives]}
        parts = tuple(observed)
        ctx.state["link_pairs"] = pairs
        ctx.write("link_pairs.json", json_text(pairs))
    ctx.state["splits"] = dict(zip(names, parts))
    for name, ds in zip(names, parts):
        ctx.write(f"{name}.jsonl", dumps(ds))


def stage_train(ctx: RunContext):
    blk = ctx.cfg.block("train")
    have_graphs = "dataset" in ctx.state or "dataset" in ctx.cfg.inputs or "splits" in ctx.cfg.inputs
    if have_graphs:
        splits = ctx.splits()
        tr, va = (splits["train"], splits["val"]) if splits else (ctx.dataset(), None)
        task = blk.get("task", "graph_label")
        cols = blk.get("label_columns")
        tcfg = TrainConfig(lr=float(blk.get("lr", 0.05)), epochs=int(blk.get("epochs", 200)), seed=ctx.seed,
                           task=task, negative_ratio=float(blk.get("negative_ratio", 1.0)),
                           label_columns=None if cols is None else tuple(cols))
        try:
            tcfg.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        params = init_model(tr.dims, int(blk.get("layers", 2)), int(blk.get("hidden", 16)), ctx.seed)
        model, history = train(params, tr, None if task == "link" else va, tcfg)
        ctx.state.update(model=model, task=task, label_columns=cols)
        dims = {**model.checkpoint_dims(), "task": task, "label_columns": cols}
        ctx.write("model.json", checkpoint_dumps("graphlearn", dims, model.flat()))
        ctx.write("history.csv", csv_text(history, ["epoch", "loss", "val_metric"]))
    if "rnn" in blk:
        r = blk["rnn"]
        seqs = _sequences(ctx)
        rcfg = RnnTrainConfig(lr=float(r.get("lr", 0.1)), epochs=int(r.get("epochs", 200)), seed=ctx.seed,
                              supervision=r.get("supervision", "every"), gen_weight=float(r.get("gen_weight", 1.0)))
        params = init_rnn(seqs.d, seqs.q, int(r.get("hidden", 8)), ctx.seed)
        rnn, history = train_rnn(params, seqs, None, rcfg)
        ctx.state["rnn"] = rnn
        ctx.write("rnn_model.json", checkpoint_dumps("seqlearn", rnn.checkpoint_dims(), rnn.flat()))
        ctx.write("rnn_history.csv", csv_text(history, ["epoch", "loss"]))


def _sequences(ctx: RunContext):
    if "sequences" not in ctx.state:
        ctx.state["sequences"] = load(ctx.input_path("sequences"))
    return ctx.state["sequences"]


def stage_eval(ctx: RunContext):
    model = ctx.model()
    task = ctx.state["task"]
    which, ds = ctx.eval_split(ctx.cfg.block("eval").get("split"))
    pairs = ctx.link_pairs(which, ds) if task == "link" else None
    metrics = evaluate(model, ds, task, ctx.state.get("label_columns"), pairs)
    doc = {"task": task, "split": which, "graphs": len(ds), "checkpoint_id": ctx.model_id(),
           "dataset_id": ctx.dataset_id(), "metrics": metrics}
    if "rnn" in ctx.state:
        doc["rnn_metrics"] = _rnn_metrics(ctx.state["rnn"], _sequences(ctx))
    ctx.write("metrics.json", json_text(doc))


def _rnn_metrics(rnn: RnnParams, seqs) -> dict:
    """Outcome-head error on every labeled step; AUC/accuracy only for 0/1 targets."""
    probs, ys = [], []
    for s in seqs.sequences:
        Yhat, _ = forward_rnn(rnn, s)
        mask = np.isfinite(s.Y).all(axis=1)
        probs.append(Yhat[mask, 0])
        ys.append(s.Y[mask, 0])
    p, y = np.concatenate(probs), np.concatenate(ys)
    out = {"mse": float(np.mean((p - y) ** 2)) if len(y) else None}
    if rnn.binary_y and len(y) and np.isin(y, (0.0, 1.0)).all():
        out["auc"], out["accuracy"] = auc(p, y), accuracy(p, y)
    return out


def stage_explain(ctx: RunContext):
    blk = ctx.cfg.block("explain")
    model = ctx.model()
    task = ctx.state["task"]
    which, ds = ctx.eval_split(blk.get("split"))
    pairs = ctx.link_pairs(which, ds) if task == "link" else None
    metric = blk.get("metric", "auc")
    rows = permutation_importance(model, ds, task, int(blk.get("repeats", 10)), ctx.seed, metric,
                                  ctx.state.get("label_columns"), pairs)
    ctx.write("importance.csv", csv_text(rows, ["feature", "kind", "index", "importance", "std"]))
    if task == "graph_label":
        g = ds.graphs[int(blk.get("graph_index", 0))]
        budget = min(int(blk.get("budget", 5)), g.num_edges)
        edges, prob = extract_substructure(model, g, budget)
        ctx.write("substructure.json", json_text({"graph_id": g.graph_id, "budget": budget,
                                                  "edges": [list(e) for e in edges], "probability": prob}))


def stage_hawkes_fit(ctx: RunContext):
    blk = ctx.cfg.block("hawkes-fit")
    if "events" not in ctx.state:
        ctx.state["events"] = load(ctx.input_path("events"))
    data = ctx.state["events"]
    keys = ("beta", "l1", "step", "max_iter", "tol", "mu_min")
    hcfg = HawkesFitConfig(**{k: blk[k] for k in keys if k in blk}, seed=ctx.seed)
    fit = fit_hawkes(data, data.n, hcfg)
    P = fit.params
    ctx.write("hawkes_model.json", checkpoint_dumps("hawkes", {"n": P.n, "beta": P.beta}, P.flat()))
    ctx.write("hawkes_trajectory.csv",
              csv_text([{"iteration": i, "objective": v} for i, v in enumerate(fit.trajectory)],
                       ["iteration", "objective"]))
    tau = float(blk["tau"]) if "tau" in blk else (
        top_k_threshold(P.W, int(blk["top_k"])) if "top_k" in blk else 0.1)
    edges, _ = infer_edges(P.W, tau)
    ctx.write("hawkes_edges.csv", csv_text([{"source": v, "target": u, "weight": float(P.W[v, u])}
                                            for v, u in edges], ["source", "target", "weight"]))
    doc = {"events": len(data), "iterations": fit.iterations, "converged": fit.converged,
           "objective": fit.trajectory[-1], "tau": tau, "edges": len(edges)}
    gt = data.ground_truth or {}
    if "W" in gt:
        doc["recovery_auc"] = recovery_auc(P.W, np.asarray(gt["W"]))
    ctx.write("hawkes_metrics.json", json_text(doc))


def _absent_pairs(g, limit: int) -> list[tuple[int, int]]:
    out = []
    for i in g.node_ids:
        for j in g.node_ids:
            if i != j and not g.has_edge(int(i), int(j)):
                out.append((int(i), int(j)))
                if len(out) == limit:
                    return out
    return out


def _candidate_features(g) -> np.ndarray:
    return g.A.mean(axis=0) if g.num_edges else np.zeros(g.A.shape[1])


def stage_attack(ctx: RunContext):
    blk = ctx.cfg.block("attack")
    model = ctx.model()
    which, ds = ctx.eval_split(None)
    outcome = int(blk.get("outcome", 0))
    g = ds.graphs[int(blk.get("graph_index", 0))]
    feats = _candidate_features(g)
    cands = [(i, j, feats) for i, j in _absent_pairs(g, int(blk.get("max_candidates", 50)))]
    ids = {"checkpoint_id": ctx.model_id(), "dataset_id": ctx.dataset_id(), "seed": ctx.seed}
    report = rank_edge_additions(model, g, cands, outcome, **ids)
    ctx.write("attack.csv", csv_text(report.to_rows(), ["rank", "action", "score", "delta"]))
    nominee, nominee_prob = nominate_jurisdiction(model, ds, outcome)
    summary = {**report.summary(), "graph_id": g.graph_id, "split": which,
               "nominee": nominee, "nominee_probability": nominee_prob,
               "persuadable": rank_persuadable_nodes(model, g, int(blk.get("top_k", 5)))}
    if "opportunities" in blk:
        opps = [Opportunity(int(o["id"]), float(o["p"]), int(o["cost"])) for o in blk["opportunities"]]
        chosen, value = portfolio_select(opps, int(blk.get("budget", 0)))
        summary["portfolio"] = {"chosen": chosen, "expected_successes": value}
    ctx.write("attack.json", json_text(summary))


def stage_defend(ctx: RunContext):
    blk = ctx.cfg.block("defend")
    model = ctx.model()
    _, ds = ctx.eval_split(None)
    outcome = int(blk.get("outcome", 0))
    g = ds.graphs[int(blk.get("graph_index", 0))]
    order = np.lexsort((g.dst, g.src))[: int(blk.get("removals", 5))]
    removals = [(int(g.src[k]), int(g.dst[k])) for k in order]
    feats = _candidate_features(g)
    additions = [(i, j, feats) for i, j in _absent_pairs(g, int(blk.get("additions", 10)))]
    res = defend_minimax(model, g, removals, additions, outcome)
    rows = [{"removal": f"({i},{j})", "attacker_best": v} for (i, j), v in zip(removals, res["values"])]
    ctx.write("defend.csv", csv_text(rows, ["removal", "attacker_best"]))
    ctx.write("defend.json", json_text({"graph_id": g.graph_id, "removal": res["removal"], "value": res["value"],
                                        "baseline": res["baseline"], "checkpoint_id": ctx.model_id(),
                                        "dataset_id": ctx.dataset_id(), "seed": ctx.seed}))


STAGE_FUNCS: dict[str, Callable[[RunContext], None]] = {
    "generate": stage_generate, "featurize": stage_featurize, "split": stage_split, "train": stage_train,
    "eval": stage_eval, "explain": stage_explain, "hawkes-fit": stage_hawkes_fit, "attack": stage_attack,
    "defend": stage_defend,
}


# Run --------------------------------------------------------------------

def _mark_partial(out: Path, names: list[str]):
    for name in names:
        path = out / name
        if path.exists():
            os.replace(path, path.with_name(path.name + ".partial"))


def run(cfg: ExperimentConfig, out: str | Path | None = None) -> dict:
    """Validate ``cfg`` then execute its stages in order; returns the manifest.

    Raises :class:`ConfigError` before anything runs when the config is
    invalid, and :class:`StageFailure` after recording a failed stage.
    """
    cfg.validate()
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(cfg, out)
    stages: list[dict] = []
    manifest = {"schema_version": 1, "config_hash": cfg.hash(), "config": cfg.to_dict(), "seed": cfg.seed,
                "versions": versions(), "stages": stages, "inputs": ctx.inputs, "artifacts": ctx.artifacts,
                "failed_stage": None}
    for name in cfg.stages:
        ctx._stage_files = []
        t0 = time.perf_counter()
        try:
            STAGE_FUNCS[name](ctx)
        except Exception as exc:
            _mark_partial(out, ctx._stage_files)
            for f in ctx._stage_files:
                ctx.artifacts.pop(f, None)
            stages.append({"name": name, "status": "failed", "wall_time_s": time.perf_counter() - t0,
                           "artifacts": [f + ".partial" for f in ctx._stage_files],
                           "error": f"{type(exc).__name__}: {exc}"})
            manifest["failed_stage"] = name
            write_text_atomic(out / MANIFEST, json_text(manifest))
            if isinstance(exc, ConfigError):
                raise
            raise StageFailure(name, exc, manifest) from exc
        stages.append({"name": name, "status": "ok", "wall_time_s": time.perf_counter() - t0,
                       "artifacts": list(ctx._stage_files)})
        log.info("stage %s done in %.2fs", name, stages[-1]["wall_time_s"])
    write_text_atomic(out / MANIFEST, json_text(manifest))
    return manifest

