"""Data model shared by every module: attributed political graphs, event
sequences and marked point processes, plus their validation.

Graphs are stored sparsely: node feature matrix ``X`` (n, m), an edge list
``src``/``dst`` of node ids and the edge feature matrix ``A`` (E, p).  A pair
(i, j) that is not in the edge list is *absent*, which is different from a
present edge whose features happen to be zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, NamedTuple, Sequence

import numpy as np

SCHEMA_VERSION = 1

NODE_TAGS = (
    "Legislator",
    "Lobbyist",
    "Constituent",
    "Committee",
    "Bill",
    "Issue",
    "Agency",
    "Other",
)


class PolifeatError(Exception):
    """Base class for all package errors."""


class ShapeError(PolifeatError, ValueError):
    pass


class ConfigError(PolifeatError, ValueError):
    pass


class NumericFailure(PolifeatError, ArithmeticError):
    pass


def _frozen(a, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _matrix(a, rows: int) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if arr.ndim != 2:
        arr = arr.reshape(rows, -1) if arr.size else np.zeros((rows, 0))
    arr.setflags(write=False)
    return arr


def _same(a: np.ndarray | None, b: np.ndarray | None) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()


@dataclass(frozen=True)
class NodeKind:
    tag: str
    label: str | None = None

    def __post_init__(self):
        if self.tag not in NODE_TAGS:
            raise ValueError(f"unknown node kind {self.tag!r}")
        if self.tag == "Other":
            if not self.label or len(self.label) > 64:
                raise ValueError("Other node kinds need a label of 1..64 characters")
        elif self.label is not None:
            raise ValueError(f"{self.tag} takes no label")

    @classmethod
    def other(cls, label: str) -> "NodeKind":
        return cls("Other", label)

    def to_json(self):
        return {"Other": self.label} if self.tag == "Other" else self.tag

    @classmethod
    def from_json(cls, obj) -> "NodeKind":
        if isinstance(obj, dict):
            return cls("Other", obj["Other"])
        return cls(obj)


LEGISLATOR = NodeKind("Legislator")


@dataclass(frozen=True, eq=False)
class Node:
    id: int
    kind: NodeKind
    features: np.ndarray

    def __eq__(self, other):
        return (isinstance(other, Node) and self.id == other.id and self.kind == other.kind
                and _same(np.asarray(self.features), np.asarray(other.features)))

    __hash__ = object.__hash__


@dataclass(frozen=True, eq=False)
class Edge:
    src: int
    dst: int
    features: np.ndarray

    def __eq__(self, other):
        return (isinstance(other, Edge) and (self.src, self.dst) == (other.src, other.dst)
                and _same(np.asarray(self.features), np.asarray(other.features)))

    __hash__ = object.__hash__


class Dims(NamedTuple):
    """Feature dimensionalities of a graph dataset.

    ``label_kinds`` marks every graph-label column as ``"binary"`` (sigmoid
    output, cross-entropy loss) or ``"real"`` (identity output, squared error).
    """

    m: int
    p: int
    M: int
    label_kinds: tuple[str, ...] = ()

    def kinds(self) -> tuple[str, ...]:
        return self.label_kinds or ("binary",) * self.M

    def to_json(self):
        return {"m": self.m, "p": self.p, "M": self.M, "label_kinds": list(self.label_kinds)}

    @classmethod
    def from_json(cls, obj) -> "Dims":
        return cls(int(obj["m"]), int(obj["p"]), int(obj["M"]), tuple(obj.get("label_kinds") or ()))


class PoliticalGraph:
    """One attributed directed graph.

    Construction coerces shapes but does not enforce invariants; use
    :func:`validate_graph` for that (generators and readers always do).
    ``node_labels`` uses NaN for an absent label (e.g. an abstention).
    """

    __slots__ = ("graph_id", "node_ids", "kinds", "X", "src", "dst", "A", "label",
                 "node_labels", "__dict__")

    def __init__(self, graph_id: int, node_ids, X, src, dst, A, label,
                 node_labels=None, kinds: Sequence[NodeKind] | None = None):
        self.graph_id = int(graph_id)
        self.node_ids = _frozen(node_ids, np.int64)
        self.X = _matrix(X, len(self.node_ids))
        self.src = _frozen(src, np.int64)
        self.dst = _frozen(dst, np.int64)
        self.A = _matrix(A, len(self.src))
        self.label = _frozen(label)
        self.node_labels = None if node_labels is None else _frozen(node_labels)
        if kinds is None:
            kinds = (LEGISLATOR,) * len(self.node_ids)
        self.kinds = tuple(kinds)

    @classmethod
    def from_parts(cls, graph_id: int, nodes: Iterable[Node], edges: Iterable[Edge], label,
                   node_labels=None) -> "PoliticalGraph":
        nodes, edges = list(nodes), list(edges)
        m = len(nodes[0].features) if nodes else 0
        p = len(edges[0].features) if edges else 0
        X = np.array([n.features for n in nodes], dtype=np.float64).reshape(len(nodes), m)
        A = np.array([e.features for e in edges], dtype=np.float64).reshape(len(edges), p)
        return cls(graph_id, [n.id for n in nodes], X, [e.src for e in edges],
                   [e.dst for e in edges], A, label, node_labels, [n.kind for n in nodes])

    # Structured views -------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.node_ids)

    @property
    def num_edges(self) -> int:
        return len(self.src)

    @property
    def nodes(self) -> list[Node]:
        return [Node(int(i), k, x) for i, k, x in zip(self.node_ids, self.kinds, self.X)]

    @property
    def edges(self) -> list[Edge]:
        return [Edge(int(s), int(d), a) for s, d, a in zip(self.src, self.dst, self.A)]

    @cached_property
    def index_of(self) -> dict[int, int]:
        return {int(v): i for i, v in enumerate(self.node_ids)}

    @cached_property
    def src_idx(self) -> np.ndarray:
        return np.array([self.index_of[int(s)] for s in self.src], dtype=np.int64)

    @cached_property
    def dst_idx(self) -> np.ndarray:
        return np.array([self.index_of[int(d)] for d in self.dst], dtype=np.int64)

    def has_edge(self, i: int, j: int) -> bool:
        return bool(np.any((self.src == i) & (self.dst == j)))

    def dense_adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """Materialize (A[n, n, p], presence[n, n]) indexed by node position."""
        n, p = self.n, self.A.shape[1]
        dense = np.zeros((n, n, p))
        present = np.zeros((n, n), dtype=bool)
        dense[self.src_idx, self.dst_idx] = self.A
        present[self.src_idx, self.dst_idx] = True
        return dense, present

    # Functional updates -----------------------------------------------
    def replace(self, **kw) -> "PoliticalGraph":
        args = dict(graph_id=self.graph_id, node_ids=self.node_ids, X=self.X, src=self.src,
                    dst=self.dst, A=self.A, label=self.label, node_labels=self.node_labels,
                    kinds=self.kinds)
        args.update(kw)
        return PoliticalGraph(**args)

    def with_edges(self, src, dst, A) -> "PoliticalGraph":
        A = np.asarray(A, dtype=np.float64)
        return self.replace(src=src, dst=dst, A=A.reshape(len(src), self.A.shape[1]) if A.size
                            else np.zeros((len(src), self.A.shape[1])))

    def add_edge(self, i: int, j: int, features) -> "PoliticalGraph":
        return self.with_edges(np.append(self.src, i), np.append(self.dst, j),
                               np.vstack([self.A, np.asarray(features, dtype=np.float64)[None, :]]))

    def remove_edge(self, i: int, j: int) -> "PoliticalGraph":
        keep = ~((self.src == i) & (self.dst == j))
        return self.with_edges(self.src[keep], self.dst[keep], self.A[keep])

    def __eq__(self, other):
        if not isinstance(other, PoliticalGraph):
            return NotImplemented
        return (self.graph_id == other.graph_id and self.kinds == other.kinds
                and all(_same(getattr(self, f), getattr(other, f))
                        for f in ("node_ids", "X", "src", "dst", "A", "label", "node_labels")))

    __hash__ = object.__hash__

    def __repr__(self):
        return f"PoliticalGraph(id={self.graph_id}, n={self.n}, edges={self.num_edges})"


@dataclass(frozen=True, eq=False)
class GraphDataset:
    graphs: tuple[PoliticalGraph, ...]
    dims: Dims
    ground_truth: dict[str, Any] | None = None
    feature_names: tuple[tuple[str, ...], tuple[str, ...]] | None = None

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        object.__setattr__(self, "dims", Dims(*self.dims))

    @property
    def K(self) -> int:
        return len(self.graphs)

    def __len__(self):
        return len(self.graphs)

    def subset(self, idx: Sequence[int]) -> "GraphDataset":
        return GraphDataset(tuple(self.graphs[i] for i in idx), self.dims, self.ground_truth,
                            self.feature_names)

    def with_graphs(self, graphs) -> "GraphDataset":
        return GraphDataset(tuple(graphs), self.dims, self.ground_truth, self.feature_names)

    def __eq__(self, other):
        if not isinstance(other, GraphDataset):
            return NotImplemented
        return (self.dims == other.dims and self.ground_truth == other.ground_truth
                and self.feature_names == other.feature_names and self.graphs == other.graphs)

    __hash__ = object.__hash__


@dataclass(frozen=True, eq=False)
class EventSequence:
    """Time-ordered events.

    ``t`` holds the timestamps, ``X`` the (T, d) event vectors and ``Y`` the
    (T, q) outcomes with NaN where a step is unlabeled.  ``generated`` flags
    events produced by a model rather than observed.
    """

    t: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    binary_x: bool = True
    generated: np.ndarray | None = None

    def __post_init__(self):
        t = _frozen(self.t)
        T = len(t)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "X", _matrix(self.X, T))
        object.__setattr__(self, "Y", _matrix(self.Y, T))
        gen = np.zeros(T, dtype=bool) if self.generated is None else self.generated
        object.__setattr__(self, "generated", _frozen(gen, bool))

    @classmethod
    def empty(cls, d: int, q: int, binary_x: bool = True) -> "EventSequence":
        return cls(np.zeros(0), np.zeros((0, d)), np.zeros((0, q)), binary_x)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Y.shape[1]

    def __len__(self):
        return len(self.t)

    def slice(self, sel) -> "EventSequence":
        return EventSequence(self.t[sel], self.X[sel], self.Y[sel], self.binary_x, self.generated[sel])

    def __eq__(self, other):
        if not isinstance(other, EventSequence):
            return NotImplemented
        return self.binary_x == other.binary_x and all(
            _same(getattr(self, f), getattr(other, f)) for f in ("t", "X", "Y", "generated"))

    __hash__ = object.__hash__


@dataclass(frozen=True, eq=False)
class SequenceDataset:
    sequences: tuple[EventSequence, ...]
    d: int
    q: int
    ground_truth: list[dict[str, Any]] | None = None

    def __post_init__(self):
        object.__setattr__(self, "sequences", tuple(self.sequences))

    def __len__(self):
        return len(self.sequences)

    def __eq__(self, other):
        if not isinstance(other, SequenceDataset):
            return NotImplemented
        return ((self.d, self.q) == (other.d, other.q) and self.ground_truth == other.ground_truth
                and self.sequences == other.sequences)

    __hash__ = object.__hash__


@dataclass(frozen=True, eq=False)
class MarkedPointProcess:
    T: float
    n: int
    times: np.ndarray
    nodes: np.ndarray
    ground_truth: dict[str, Any] | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "times", _frozen(self.times))
        object.__setattr__(self, "nodes", _frozen(self.nodes, np.int64))

    @property
    def events(self) -> list[tuple[float, int]]:
        return [(float(t), int(u)) for t, u in zip(self.times, self.nodes)]

    def __len__(self):
        return len(self.times)

    def __eq__(self, other):
        if not isinstance(other, MarkedPointProcess):
            return NotImplemented
        return (self.n == other.n and _same(np.float64(self.T), np.float64(other.T))
                and _same(self.times, other.times) and _same(self.nodes, other.nodes)
                and self.ground_truth == other.ground_truth)

    __hash__ = object.__hash__


# Validation -------------------------------------------------------------

@dataclass
class ValidationReport:
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_graph(g: PoliticalGraph, dims) -> ValidationReport:
    """Report every violated graph invariant.  Never raises."""
    v: list[str] = []
    try:
        m, p, M = int(dims[0]), int(dims[1]), int(dims[2])
    except Exception as exc:  # noqa: BLE001
        return ValidationReport([f"invalid dims {dims!r}: {exc}"])
    try:
        ids = [int(i) for i in g.node_ids]
        if not ids:
            v.append("graph has no nodes (n >= 1 required)")
        seen: set[int] = set()
        for i in ids:
            if i < 0:
                v.append(f"negative node id {i}")
            if i in seen:
                v.append(f"duplicate node id {i}")
            seen.add(i)
        if g.X.ndim != 2 or g.X.shape[0] != len(ids):
            v.append(f"node feature matrix has shape {g.X.shape}, expected ({len(ids)}, {m})")
        else:
            if g.X.shape[1] != m:
                for i in ids:
                    v.append(f"node {i} has {g.X.shape[1]} features, expected m={m}")
            bad = ~np.isfinite(g.X).all(axis=1)
            for r in np.flatnonzero(bad):
                v.append(f"node {ids[r]} has non-finite features")
        if len(g.kinds) != len(ids):
            v.append(f"{len(g.kinds)} node kinds for {len(ids)} nodes")
        if len(g.src) != len(g.dst) or g.A.shape[0] != len(g.src):
            v.append(f"edge arrays disagree: {len(g.src)} src, {len(g.dst)} dst, {g.A.shape[0]} feature rows")
        else:
            if g.A.ndim != 2 or (len(g.src) and g.A.shape[1] != p):
                v.append(f"edge features have width {g.A.shape[-1]}, expected p={p}")
            pairs: set[tuple[int, int]] = set()
            for e, (s, d) in enumerate(zip(g.src.tolist(), g.dst.tolist())):
                if s not in seen:
                    v.append(f"edge {e} source {s} is not a node")
                if d not in seen:
                    v.append(f"edge {e} target {d} is not a node")
                if s == d:
                    v.append(f"self-loop at node {s}")
                if (s, d) in pairs:
                    v.append(f"duplicate edge ({s}, {d})")
                pairs.add((s, d))
                if not np.isfinite(g.A[e]).all():
                    v.append(f"edge ({s}, {d}) has non-finite features")
        if g.label.shape != (M,):
            v.append(f"graph label has shape {g.label.shape}, expected ({M},)")
        elif not np.isfinite(g.label).all():
            v.append("graph label is not finite")
        if g.node_labels is not None and g.node_labels.shape != (len(ids),):
            v.append(f"node_labels has shape {g.node_labels.shape}, expected ({len(ids)},)")
    except Exception as exc:  # noqa: BLE001  -- totality: structural garbage becomes a violation
        v.append(f"malformed graph structure: {exc}")
    return ValidationReport(v)


def validate_dataset(ds: GraphDataset) -> ValidationReport:
    v: list[str] = []
    ids: set[int] = set()
    for g in ds.graphs:
        if g.graph_id in ids:
            v.append(f"duplicate graph id {g.graph_id}")
        ids.add(g.graph_id)
        v.extend(f"graph {g.graph_id}: {msg}" for msg in validate_graph(g, ds.dims).violations)
    if len(ds.dims.kinds()) != ds.dims.M:
        v.append(f"{len(ds.dims.kinds())} label kinds for M={ds.dims.M}")
    return ValidationReport(v)


def validate_sequence(seq: EventSequence, d: int | None = None, q: int | None = None) -> ValidationReport:
    v: list[str] = []
    if d is not None and seq.d != d:
        v.append(f"event width {seq.d}, expected d={d}")
    if q is not None and seq.q != q:
        v.append(f"outcome width {seq.q}, expected q={q}")
    if len(seq.t) > 1 and not np.all(np.diff(seq.t) > 0):
        v.append("timestamps are not strictly increasing")
    if not np.isfinite(seq.X).all():
        v.append("event vectors are not finite")
    if seq.binary_x and not np.isin(seq.X, (0.0, 1.0)).all():
        v.append("binary event vector has entries other than 0/1")
    return ValidationReport(v)


def validate_point_process(pp: MarkedPointProcess) -> ValidationReport:
    v: list[str] = []
    if not pp.T > 0:
        v.append(f"horizon T={pp.T} must be positive")
    if len(pp.times) != len(pp.nodes):
        v.append("times and nodes differ in length")
    if len(pp.times):
        if not np.all(np.diff(pp.times) > 0):
            v.append("timestamps are not strictly increasing")
        if pp.times[0] <= 0 or pp.times[-1] > pp.T:
            v.append(f"timestamps must lie in (0, {pp.T}]")
        if pp.nodes.min() < 0 or pp.nodes.max() >= pp.n:
            v.append(f"node index outside [0, {pp.n})")
    return ValidationReport(v)


def require(report: ValidationReport, what: str = "value"):
    if not report.ok:
        raise ShapeError(f"invalid {what}: " + "; ".join(report.violations[:5]))
