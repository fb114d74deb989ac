"""Newline-delimited dataset files and single-document model checkpoints.

Every dataset file starts with a header record::

    {"schema_version": 1, "kind": "graph_dataset", "dims": {...}, "count": K, ...}

followed by exactly ``count`` records, one per graph / sequence / event.
Floats are written with ``repr`` so a read-back value is bit-identical.
Absent labels (NaN in memory) are written as ``null``.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from pathlib import Path
from typing import Any, Union

import numpy as np

from .core import (
    SCHEMA_VERSION,
    Dims,
    EventSequence,
    GraphDataset,
    MarkedPointProcess,
    NodeKind,
    PoliticalGraph,
    PolifeatError,
    SequenceDataset,
)

Persistable = Union[GraphDataset, SequenceDataset, MarkedPointProcess]


class ParseError(PolifeatError, ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class SchemaVersionError(PolifeatError, ValueError):
    pass


def _floats(a) -> list:
    return [None if math.isnan(x) else x for x in np.asarray(a, dtype=np.float64).ravel().tolist()]


def _unfloat(a) -> list:
    return [math.nan if x is None else float(x) for x in a]


def _dump(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def _jsonable(obj: Any) -> Any:
    """Convert numpy containers inside a ground-truth sidecar to plain JSON."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


# Encoding ---------------------------------------------------------------

def _graph_record(g: PoliticalGraph) -> dict:
    return {
        "graph_id": g.graph_id,
        "nodes": [{"id": int(i), "kind": k.to_json(), "features": _floats(x)}
                  for i, k, x in zip(g.node_ids, g.kinds, g.X)],
        "edges": [{"src": int(s), "dst": int(d), "features": _floats(a)}
                  for s, d, a in zip(g.src, g.dst, g.A)],
        "label": _floats(g.label),
        "node_labels": None if g.node_labels is None else _floats(g.node_labels),
    }


def _sequence_record(s: EventSequence) -> dict:
    events = []
    for k in range(len(s)):
        ev = {"t": float(s.t[k]), "x": _floats(s.X[k])}
        y = s.Y[k]
        ev["y"] = None if (y.size and np.isnan(y).all()) else _floats(y)
        if s.generated[k]:
            ev["generated"] = True
        events.append(ev)
    return {"binary_x": bool(s.binary_x), "events": events}


def dumps(value: Persistable) -> str:
    if isinstance(value, GraphDataset):
        header = {"schema_version": SCHEMA_VERSION, "kind": "graph_dataset",
                  "dims": value.dims.to_json(), "count": value.K,
                  "feature_names": None if value.feature_names is None
                  else [list(value.feature_names[0]), list(value.feature_names[1])],
                  "ground_truth": _jsonable(value.ground_truth)}
        records = [_graph_record(g) for g in value.graphs]
    elif isinstance(value, SequenceDataset):
        header = {"schema_version": SCHEMA_VERSION, "kind": "event_sequences",
                  "dims": {"d": value.d, "q": value.q}, "count": len(value),
                  "ground_truth": _jsonable(value.ground_truth)}
        records = [_sequence_record(s) for s in value.sequences]
    elif isinstance(value, MarkedPointProcess):
        header = {"schema_version": SCHEMA_VERSION, "kind": "point_process",
                  "dims": {"n": value.n}, "T": value.T, "count": len(value),
                  "ground_truth": _jsonable(value.ground_truth)}
        records = [[float(t), int(u)] for t, u in zip(value.times, value.nodes)]
    else:
        raise TypeError(f"cannot serialize {type(value).__name__}")
    return "".join(_dump(r) + "\n" for r in [header, *records])


# Decoding ---------------------------------------------------------------

def _decode_graph(r: dict, dims: Dims) -> PoliticalGraph:
    nodes, edges = r["nodes"], r["edges"]
    X = np.array([_unfloat(n["features"]) for n in nodes], dtype=np.float64).reshape(len(nodes), -1) \
        if nodes and dims.m else np.zeros((len(nodes), dims.m))
    A = np.array([_unfloat(e["features"]) for e in edges], dtype=np.float64).reshape(len(edges), -1) \
        if edges else np.zeros((0, dims.p))
    nl = r.get("node_labels")
    return PoliticalGraph(
        r["graph_id"], [n["id"] for n in nodes], X, [e["src"] for e in edges],
        [e["dst"] for e in edges], A, _unfloat(r["label"]),
        None if nl is None else _unfloat(nl), [NodeKind.from_json(n["kind"]) for n in nodes])


def _decode_sequence(r: dict, d: int, q: int) -> EventSequence:
    ev = r["events"]
    T = len(ev)
    t = [e["t"] for e in ev]
    X = np.array([_unfloat(e["x"]) for e in ev]).reshape(T, d)
    Y = np.array([[math.nan] * q if e.get("y") is None else _unfloat(e["y"]) for e in ev]).reshape(T, q)
    gen = [bool(e.get("generated", False)) for e in ev]
    return EventSequence(t, X, Y, bool(r["binary_x"]), gen)


def loads(text: str) -> Persistable:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError(1, "empty file: missing header record")

    def parse(i: int):
        try:
            return json.loads(lines[i])
        except json.JSONDecodeError as exc:
            raise ParseError(i + 1, f"malformed record: {exc.msg}") from None

    header = parse(0)
    if not isinstance(header, dict) or "schema_version" not in header:
        raise ParseError(1, "first record is not a header")
    if header["schema_version"] != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"schema version {header['schema_version']} is not supported (expected {SCHEMA_VERSION})")
    kind, count = header.get("kind"), header.get("count")
    body = [parse(i) for i in range(1, len(lines))]
    if count is not None and len(body) != count:
        raise ParseError(len(lines), f"header announces {count} records but file holds {len(body)}")
    try:
        if kind == "graph_dataset":
            dims = Dims.from_json(header["dims"])
            fn = header.get("feature_names")
            graphs = []
            for i, r in enumerate(body):
                try:
                    graphs.append(_decode_graph(r, dims))
                except (KeyError, TypeError, ValueError) as exc:
                    raise ParseError(i + 2, f"bad graph record: {exc}") from None
            return GraphDataset(tuple(graphs), dims, header.get("ground_truth"),
                                None if fn is None else (tuple(fn[0]), tuple(fn[1])))
        if kind == "event_sequences":
            d, q = int(header["dims"]["d"]), int(header["dims"]["q"])
            seqs = []
            for i, r in enumerate(body):
                try:
                    seqs.append(_decode_sequence(r, d, q))
                except (KeyError, TypeError, ValueError) as exc:
                    raise ParseError(i + 2, f"bad sequence record: {exc}") from None
            return SequenceDataset(tuple(seqs), d, q, header.get("ground_truth"))
        if kind == "point_process":
            times = [float(r[0]) for r in body]
            nodes = [int(r[1]) for r in body]
            return MarkedPointProcess(header["T"], int(header["dims"]["n"]), times, nodes,
                                      header.get("ground_truth"))
    except KeyError as exc:
        raise ParseError(1, f"header missing field {exc}") from None
    raise ParseError(1, f"unknown dataset kind {kind!r}")


def roundtrip(value: Persistable) -> Persistable:
    return loads(dumps(value))


def write_text_atomic(path: str | os.PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path


def save(value: Persistable, path: str | os.PathLike) -> Path:
    return write_text_atomic(path, dumps(value))


def load(path: str | os.PathLike) -> Persistable:
    with open(path, encoding="utf-8", newline="") as fh:
        return loads(fh.read())


# Checkpoints ------------------------------------------------------------

def checkpoint_dumps(model_kind: str, dims: dict, params: np.ndarray) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "model_kind": model_kind, "dims": _jsonable(dims),
           "params": _floats(params)}
    return _dump(doc) + "\n"


def checkpoint_loads(text: str) -> tuple[str, dict, np.ndarray]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.lineno, f"malformed checkpoint: {exc.msg}") from None
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionError(f"checkpoint schema version {doc.get('schema_version')} unsupported")
    return doc["model_kind"], doc["dims"], np.array(_unfloat(doc["params"]), dtype=np.float64)


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
