"""Edge-gated mean-aggregation message passing, trained by full-batch
gradient descent with hand-written backpropagation.

Per layer l and node i::

    g_ji    = sigmoid(u_l . a_ji + c_l)                       (one gate per edge j->i)
    msg_i   = sum_{(j,i) in E} g_ji * W_nbr_l h_j / max(1, indeg(i))
    h_i'    = tanh(W_self_l h_i + msg_i + b_l)

with ``h_i^0 = W_in x_i + b_in``.  Heads: graph readout ``z = mean_i h_i^L``
feeds ``w_out z + b_out`` (sigmoid on binary columns, identity on real ones);
the node head is ``sigmoid(w_node . h_i^L + b_node)``; links score
``sigmoid(h_i^L . B h_j^L)``.

Flat parameter order (row-major within each tensor) is :data:`PARAM_FIELDS`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .core import (
    Dims,
    GraphDataset,
    NumericFailure,
    PoliticalGraph,
    PolifeatError,
    ShapeError,
)
from .metrics import accuracy, auc, mse

log = logging.getLogger(__name__)

EPS_CLIP = 1e-7
TASKS = ("graph_label", "node_label", "link")
PARAM_FIELDS = ("W_in", "b_in", "W_self", "W_nbr", "u", "c", "b", "w_out", "b_out",
                "w_node", "b_node", "B")


class TaskError(PolifeatError, ValueError):
    pass


def param_count(m: int, p: int, M: int, L: int = 2, h: int = 16) -> int:
    """Closed-form size of the flat parameter vector."""
    return h * m + h + L * (2 * h * h + p + 1 + h) + M * h + M + h + 1 + h * h


@dataclass(eq=False)
class GraphModelParams:
    W_in: np.ndarray    # (h, m)
    b_in: np.ndarray    # (h,)
    W_self: np.ndarray  # (L, h, h)
    W_nbr: np.ndarray   # (L, h, h)
    u: np.ndarray       # (L, p)
    c: np.ndarray       # (L,)
    b: np.ndarray       # (L, h)
    w_out: np.ndarray   # (M, h)
    b_out: np.ndarray   # (M,)
    w_node: np.ndarray  # (h,)
    b_node: np.ndarray  # (1,)
    B: np.ndarray       # (h, h)
    label_kinds: tuple[str, ...] = field(default=())

    @property
    def L(self) -> int:
        return self.W_self.shape[0]

    @property
    def h(self) -> int:
        return self.W_in.shape[0]

    @property
    def dims(self) -> Dims:
        return Dims(self.W_in.shape[1], self.u.shape[1], self.w_out.shape[0], self.label_kinds)

    def tensors(self) -> list[np.ndarray]:
        return [getattr(self, f) for f in PARAM_FIELDS]

    def flat(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors()])

    def from_vector(self, vec) -> "GraphModelParams":
        vec = np.asarray(vec, dtype=np.float64)
        out, pos = {}, 0
        for f in PARAM_FIELDS:
            t = getattr(self, f)
            out[f] = vec[pos:pos + t.size].reshape(t.shape).copy()
            pos += t.size
        if pos != vec.size:
            raise ShapeError(f"flat vector has {vec.size} entries, expected {pos}")
        return replace(self, **out)

    def zeros_like(self) -> "GraphModelParams":
        return self.from_vector(np.zeros(self.size))

    @property
    def size(self) -> int:
        return sum(t.size for t in self.tensors())

    def copy(self) -> "GraphModelParams":
        return self.from_vector(self.flat())

    def checkpoint_dims(self) -> dict:
        return {**self.dims.to_json(), "L": self.L, "h": self.h}

    @classmethod
    def empty(cls, dims: Dims, L: int = 2, h: int = 16) -> "GraphModelParams":
        m, p, M = dims[0], dims[1], dims[2]
        z = np.zeros
        return cls(z((h, m)), z(h), z((L, h, h)), z((L, h, h)), z((L, p)), z(L), z((L, h)),
                   z((M, h)), z(M), z(h), z(1), z((h, h)), tuple(Dims(*dims).kinds()))

    @classmethod
    def from_checkpoint(cls, dims: dict, flat) -> "GraphModelParams":
        d = Dims.from_json(dims)
        return cls.empty(d, int(dims["L"]), int(dims["h"])).from_vector(flat)

    def __eq__(self, other):
        return (isinstance(other, GraphModelParams) and self.label_kinds == other.label_kinds
                and all(a.shape == b.shape and np.array_equal(a, b)
                        for a, b in zip(self.tensors(), other.tensors())))

    __hash__ = object.__hash__


def init_model(dims, L: int = 2, h: int = 16, seed: int = 0) -> GraphModelParams:
    """Uniform Glorot initialization, biases zero.

    Draw order follows :data:`PARAM_FIELDS`; a vector (``u_l``, ``w_node``)
    counts as a matrix with one output.
    """
    dims = Dims(*dims)
    if min(dims[0], dims[1], dims[2], L, h) < 1:
        raise ShapeError(f"dimensions must be positive: dims={tuple(dims[:3])}, L={L}, h={h}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 5]))

    def glorot(shape, fan_in, fan_out):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-s, s, shape)

    P = GraphModelParams.empty(dims, L, h)
    P.W_in = glorot((h, dims.m), dims.m, h)
    P.W_self = np.stack([glorot((h, h), h, h) for _ in range(L)])
    P.W_nbr = np.stack([glorot((h, h), h, h) for _ in range(L)])
    P.u = np.stack([glorot(dims.p, dims.p, 1) for _ in range(L)])
    P.w_out = glorot((dims.M, h), h, dims.M)
    P.w_node = glorot(h, h, 1)
    P.B = glorot((h, h), h, h)
    return P


# Batching ---------------------------------------------------------------

class Batch:
    """Disjoint union of graphs with the sparse operators of the forward pass.

    ``agg`` (N x E) averages incoming messages, ``scatter`` (N x E) routes a
    per-edge gradient back to its source node, ``readout`` (K x N) averages
    node embeddings per graph.
    """

    def __init__(self, graphs: Sequence[PoliticalGraph], dims=None):
        self.graphs = list(graphs)
        if not self.graphs:
            raise ShapeError("empty batch")
        sizes = np.array([g.n for g in self.graphs])
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        N = int(self.offsets[-1])
        self.X = np.vstack([g.X for g in self.graphs])
        self.src = np.concatenate([g.src_idx + o for g, o in zip(self.graphs, self.offsets)])
        self.dst = np.concatenate([g.dst_idx + o for g, o in zip(self.graphs, self.offsets)])
        p = self.graphs[0].A.shape[1]
        self.A = np.vstack([g.A.reshape(g.num_edges, -1) if g.num_edges else np.zeros((0, p))
                            for g in self.graphs])
        if dims is not None:
            m, p_ = dims[0], dims[1]
            if self.X.shape[1] != m:
                raise ShapeError(f"node features have width {self.X.shape[1]}, model expects m={m}")
            if len(self.src) and self.A.shape[1] != p_:
                raise ShapeError(f"edge features have width {self.A.shape[1]}, model expects p={p_}")
            if len(self.src) == 0:
                self.A = np.zeros((0, p_))
        E = len(self.src)
        indeg = np.bincount(self.dst, minlength=N)
        eidx = np.arange(E)
        self.agg = sp.csr_matrix((1.0 / np.maximum(indeg[self.dst], 1), (self.dst, eidx)), shape=(N, E))
        self.scatter = sp.csr_matrix((np.ones(E), (self.src, eidx)), shape=(N, E))
        self.graph_of = np.repeat(np.arange(len(self.graphs)), sizes)
        self.readout = sp.csr_matrix((1.0 / sizes[self.graph_of], (self.graph_of, np.arange(N))),
                                     shape=(len(self.graphs), N))
        self.N, self.E, self.K = N, E, len(self.graphs)


@dataclass
class ForwardCache:
    H: list[np.ndarray]        # H[0] .. H[L], each (N, h)
    gates: list[np.ndarray]    # per layer (E,)
    P: list[np.ndarray]        # per layer W_nbr H (N, h)
    z: np.ndarray              # (K, h)
    graph_logits: np.ndarray   # (K, M)
    node_logits: np.ndarray    # (N,)


def _forward(params: GraphModelParams, batch: Batch) -> ForwardCache:
    H = batch.X @ params.W_in.T + params.b_in
    Hs, gates, Ps = [H], [], []
    for l in range(params.L):
        g = expit(batch.A @ params.u[l] + params.c[l])
        P = H @ params.W_nbr[l].T
        msg = batch.agg @ (g[:, None] * P[batch.src])
        H = np.tanh(H @ params.W_self[l].T + msg + params.b[l])
        Hs.append(H)
        gates.append(g)
        Ps.append(P)
    z = batch.readout @ H
    graph_logits = z @ params.w_out.T + params.b_out
    node_logits = H @ params.w_node + params.b_node[0]
    return ForwardCache(Hs, gates, Ps, z, graph_logits, node_logits)


def _graph_outputs(params: GraphModelParams, logits: np.ndarray) -> np.ndarray:
    kinds = params.label_kinds or ("binary",) * logits.shape[1]
    binary = np.array([k == "binary" for k in kinds])
    return np.where(binary, expit(logits), logits)


@dataclass
class GraphOutputs:
    graph: np.ndarray   # (M,)
    nodes: np.ndarray   # (n,)
    H: np.ndarray       # (n, h)


def forward_graph(params: GraphModelParams, g: PoliticalGraph) -> GraphOutputs:
    """Graph-level outputs, node probabilities and final node embeddings."""
    cache = _forward(params, Batch([g], params.dims))
    return GraphOutputs(_graph_outputs(params, cache.graph_logits)[0], expit(cache.node_logits),
                        cache.H[-1])


def forward_batch(params: GraphModelParams, graphs: Sequence[PoliticalGraph]) -> tuple[np.ndarray, np.ndarray, Batch]:
    """Graph outputs (K, M) and node probabilities (N,) for many graphs at once."""
    batch = Batch(graphs, params.dims)
    cache = _forward(params, batch)
    return _graph_outputs(params, cache.graph_logits), expit(cache.node_logits), batch


def score_link(params: GraphModelParams, g: PoliticalGraph, i: int, j: int) -> float:
    """Probability of a directed edge from node id ``i`` to node id ``j``."""
    if i == j:
        raise ValueError(f"link score needs two distinct nodes, got ({i}, {i})")
    H = forward_graph(params, g).H
    hi, hj = H[g.index_of[i]], H[g.index_of[j]]
    return float(expit(hi @ params.B @ hj))


# Loss and gradients ----------------------------------------------------

def _bce(logit: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clipped binary cross-entropy and its derivative w.r.t. the logit."""
    p = expit(logit)
    pc = np.clip(p, EPS_CLIP, 1 - EPS_CLIP)
    loss = -(y * np.log(pc) + (1 - y) * np.log(1 - pc))
    dlogit = np.where(p == pc, p - y, 0.0)
    return loss, dlogit


@dataclass(frozen=True)
class LinkPairs:
    """Scored ordered pairs as global batch node indices with 0/1 targets."""

    i: np.ndarray
    j: np.ndarray
    y: np.ndarray


def sample_link_pairs(graphs: Sequence[PoliticalGraph], ratio: float, rng: np.random.Generator,
                      positives: Sequence[np.ndarray] | None = None) -> LinkPairs:
    """Existing edges as positives plus uniformly drawn absent ordered pairs.

    ``positives`` optionally overrides, per graph, the (k, 2) index pairs
    used as positives (defaults to each graph's own edges).  Negatives per
    graph: ``round(ratio * positives)``, without replacement, drawn from
    pairs absent from the graph and from the positives.
    """
    I, J, Y = [], [], []
    off = 0
    for k, g in enumerate(graphs):
        n = g.n
        pos = (np.column_stack([g.src_idx, g.dst_idx]) if positives is None
               else np.asarray(positives[k], dtype=np.int64).reshape(-1, 2))
        taken = np.zeros((n, n), dtype=bool)
        taken[g.src_idx, g.dst_idx] = True
        taken[pos[:, 0], pos[:, 1]] = True
        np.fill_diagonal(taken, True)
        free = np.flatnonzero(~taken.ravel())
        k_neg = min(int(round(ratio * len(pos))), len(free))
        neg = rng.choice(free, size=k_neg, replace=False) if k_neg else np.zeros(0, dtype=np.int64)
        I += [pos[:, 0] + off, neg // n + off]
        J += [pos[:, 1] + off, neg % n + off]
        Y += [np.ones(len(pos)), np.zeros(k_neg)]
        off += n
    return LinkPairs(np.concatenate(I).astype(np.int64), np.concatenate(J).astype(np.int64),
                     np.concatenate(Y))


def _target_columns(params: GraphModelParams, columns) -> list[int]:
    M = params.w_out.shape[0]
    return list(range(M)) if columns is None else [int(c) for c in columns]


def loss_and_gradients(params: GraphModelParams, batch: Batch | Sequence[PoliticalGraph], task: str,
                       label_columns=None, pairs: LinkPairs | None = None,
                       negative_ratio: float = 1.0, seed: int = 0) -> tuple[float, GraphModelParams]:
    """Mean task loss and its exact gradient with respect to every parameter.

    graph_label: mean over (graph, column) entries, cross-entropy on binary
    columns and squared error on real ones.  node_label: mean cross-entropy
    over nodes with a finite label.  link: mean cross-entropy over ``pairs``
    (sampled from ``seed`` when not given).
    """
    if task not in TASKS:
        raise TaskError(f"unknown task {task!r}; expected one of {TASKS}")
    if not isinstance(batch, Batch):
        batch = Batch(batch, params.dims)
    cache = _forward(params, batch)
    HL = cache.H[-1]
    grads = params.zeros_like()
    dHL = np.zeros_like(HL)

    if task == "graph_label":
        cols = _target_columns(params, label_columns)
        Y = np.array([g.label for g in batch.graphs])
        if Y.ndim != 2 or Y.shape[1] != params.w_out.shape[0]:
            raise TaskError(f"graph labels have shape {Y.shape}, model has M={params.w_out.shape[0]}")
        kinds = params.label_kinds or ("binary",) * Y.shape[1]
        count = batch.K * len(cols)
        total = 0.0
        dlogits = np.zeros_like(cache.graph_logits)
        for c in cols:
            o, y = cache.graph_logits[:, c], Y[:, c]
            if kinds[c] == "binary":
                if not np.isin(y, (0.0, 1.0)).all():
                    raise TaskError(f"label column {c} is binary but holds values other than 0/1")
                l, d = _bce(o, y)
            else:
                l, d = (o - y) ** 2, 2 * (o - y)
            total += l.sum()
            dlogits[:, c] = d / count
        loss = total / count
        grads.w_out = dlogits.T @ cache.z
        grads.b_out = dlogits.sum(axis=0)
        dz = dlogits @ params.w_out
        dHL += batch.readout.T @ dz
    elif task == "node_label":
        labels = []
        for g in batch.graphs:
            if g.node_labels is None:
                raise TaskError(f"graph {g.graph_id} has no node labels")
            labels.append(g.node_labels)
        y = np.concatenate(labels)
        mask = np.isfinite(y)
        if not mask.any():
            raise TaskError("no labeled nodes in batch")
        if not np.isin(y[mask], (0.0, 1.0)).all():
            raise TaskError("node labels must be 0/1")
        l, d = _bce(cache.node_logits[mask], y[mask])
        cnt = mask.sum()
        loss = l.sum() / cnt
        dn = np.zeros(batch.N)
        dn[mask] = d / cnt
        grads.w_node = HL.T @ dn
        grads.b_node = np.array([dn.sum()])
        dHL += np.outer(dn, params.w_node)
    else:
        if pairs is None:
            pairs = sample_link_pairs(batch.graphs, negative_ratio,
                                      np.random.default_rng(np.random.SeedSequence([int(seed), 6])))
        if len(pairs.y) == 0:
            raise TaskError("no link pairs to score")
        Hi, Hj = HL[pairs.i], HL[pairs.j]
        BHj = Hj @ params.B.T
        s = np.einsum("ph,ph->p", Hi, BHj)
        l, d = _bce(s, pairs.y)
        cnt = len(pairs.y)
        loss = l.sum() / cnt
        d = d / cnt
        grads.B = (Hi * d[:, None]).T @ Hj
        np.add.at(dHL, pairs.i, d[:, None] * BHj)
        np.add.at(dHL, pairs.j, d[:, None] * (Hi @ params.B))

    dH = dHL
    for l in reversed(range(params.L)):
        Hin, Hout = cache.H[l], cache.H[l + 1]
        g, P = cache.gates[l], cache.P[l]
        dZ = dH * (1.0 - Hout ** 2)
        grads.W_self[l] = dZ.T @ Hin
        grads.b[l] = dZ.sum(axis=0)
        dMsg = batch.agg.T @ dZ                      # (E, h)
        Psrc = P[batch.src]
        dg = np.einsum("eh,eh->e", dMsg, Psrc)
        dP = batch.scatter @ (g[:, None] * dMsg)     # (N, h)
        grads.W_nbr[l] = dP.T @ Hin
        dpre = dg * g * (1.0 - g)
        grads.u[l] = batch.A.T @ dpre
        grads.c[l] = dpre.sum()
        dH = dZ @ params.W_self[l] + dP @ params.W_nbr[l]
    grads.W_in = dH.T @ batch.X
    grads.b_in = dH.sum(axis=0)
    return float(loss), grads


# Training ---------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    epochs: int = 200
    seed: int = 0
    task: str = "graph_label"
    negative_ratio: float = 1.0
    label_columns: tuple[int, ...] | None = None

    def validate(self):
        if not self.lr >= 0:
            raise ValueError(f"learning rate {self.lr} must be non-negative")
        if self.epochs < 1:
            raise ValueError(f"epochs={self.epochs} must be >= 1")
        if self.task not in TASKS:
            raise TaskError(f"unknown task {self.task!r}")


def _epoch_seed(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), 7, int(epoch)]))


def train(params: GraphModelParams, train_ds: GraphDataset, val_ds: GraphDataset | None,
          cfg: TrainConfig, link_positives=None) -> tuple[GraphModelParams, list[dict]]:
    """Full-batch gradient descent for ``cfg.epochs`` epochs.

    The history holds one row per epoch: training loss and the validation
    metric (AUC where defined) measured before the update of that epoch.
    """
    cfg.validate()
    if not len(train_ds):
        raise ShapeError("training set is empty")
    batch = Batch(train_ds.graphs, params.dims)
    val_batch = Batch(val_ds.graphs, params.dims) if val_ds is not None and len(val_ds) else None
    history: list[dict] = []
    theta = params.flat()
    P = params
    for epoch in range(cfg.epochs):
        pairs = None
        if cfg.task == "link":
            pairs = sample_link_pairs(train_ds.graphs, cfg.negative_ratio, _epoch_seed(cfg.seed, epoch),
                                      link_positives)
        loss, grads = loss_and_gradients(P, batch, cfg.task, cfg.label_columns, pairs)
        if not np.isfinite(loss):
            raise NumericFailure(f"training diverged: loss is {loss} at epoch {epoch}")
        row = {"epoch": epoch, "loss": loss}
        if val_batch is not None and cfg.task != "link":
            row["val_metric"] = _primary_metric(evaluate(P, val_batch, cfg.task, cfg.label_columns))
        history.append(row)
        if cfg.lr:
            theta = theta - cfg.lr * grads.flat()
            P = params.from_vector(theta)
    return P, history


def _primary_metric(metrics: dict):
    for key in ("auc", "accuracy", "mse"):
        if metrics.get(key) is not None:
            return metrics[key]
    return None


def evaluate(params: GraphModelParams, ds: GraphDataset | Batch | Sequence[PoliticalGraph], task: str,
             label_columns=None, pairs: LinkPairs | None = None) -> dict:
    """Accuracy / AUC on binary targets and MSE on real targets.

    graph_label reports ``auc``/``accuracy`` for the first binary target
    column and ``mse`` for the first real one (plus per-column entries).
    link scores the given ``pairs``.  An undefined AUC is ``None``.
    """
    if isinstance(ds, Batch):
        batch = ds
    else:
        graphs = ds.graphs if isinstance(ds, GraphDataset) else list(ds)
        if not graphs:
            raise ShapeError("cannot evaluate on an empty dataset")
        batch = Batch(graphs, params.dims)
    cache = _forward(params, batch)
    out: dict = {}
    if task == "graph_label":
        probs = _graph_outputs(params, cache.graph_logits)
        Y = np.array([g.label for g in batch.graphs])
        kinds = params.label_kinds or ("binary",) * Y.shape[1]
        for c in _target_columns(params, label_columns):
            if kinds[c] == "binary":
                a, acc = auc(probs[:, c], Y[:, c]), accuracy(probs[:, c], Y[:, c])
                out[f"auc_{c}"], out[f"accuracy_{c}"] = a, acc
                out.setdefault("auc", a)
                out.setdefault("accuracy", acc)
            else:
                e = mse(probs[:, c], Y[:, c])
                out[f"mse_{c}"] = e
                out.setdefault("mse", e)
    elif task == "node_label":
        y = np.concatenate([g.node_labels for g in batch.graphs])
        mask = np.isfinite(y)
        probs = expit(cache.node_logits)
        out["auc"] = auc(probs[mask], y[mask])
        out["accuracy"] = accuracy(probs[mask], y[mask])
    elif task == "link":
        if pairs is None:
            raise TaskError("link evaluation needs explicit pairs")
        HL = cache.H[-1]
        s = expit(np.einsum("ph,ph->p", HL[pairs.i], HL[pairs.j] @ params.B.T))
        out["auc"] = auc(s, pairs.y)
        out["accuracy"] = accuracy(s, pairs.y)
    else:
        raise TaskError(f"unknown task {task!r}")
    return out


# Explanation ------------------------------------------------------------

def _importance_metric(params, graphs, task, label_columns, pairs, metric):
    res = evaluate(params, graphs, task, label_columns, pairs)
    if metric == "mse":
        return -res["mse"]
    val = res.get(metric)
    return np.nan if val is None else val


def permutation_importance(params: GraphModelParams, ds: GraphDataset, task: str, repeats: int = 10,
                           seed: int = 0, metric: str = "auc", label_columns=None,
                           pairs: LinkPairs | None = None) -> list[dict]:
    """Drop in ``metric`` when one feature column is shuffled within each graph.

    Returns one row per feature, node features first then edge features, with
    the mean drop over ``repeats`` shuffles and its standard deviation.  For
    ``metric="mse"`` the score is the negated error so larger is better.
    """
    graphs = list(ds.graphs)
    base = _importance_metric(params, graphs, task, label_columns, pairs, metric)
    m, p = ds.dims.m, ds.dims.p
    names = ds.feature_names or (tuple(f"x{i}" for i in range(m)), tuple(f"a{i}" for i in range(p)))
    rows = []
    for f in range(m + p):
        on_nodes = f < m
        col = f if on_nodes else f - m
        drops = []
        for r in range(repeats):
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), 8, f, r]))
            shuffled = []
            for g in graphs:
                if on_nodes:
                    X = g.X.copy()
                    X[:, col] = X[rng.permutation(g.n), col]
                    shuffled.append(g.replace(X=X))
                else:
                    A = g.A.copy()
                    A[:, col] = A[rng.permutation(g.num_edges), col]
                    shuffled.append(g.replace(A=A))
            drops.append(base - _importance_metric(params, shuffled, task, label_columns, pairs, metric))
        drops = np.array(drops)
        rows.append({"feature": names[0][col] if on_nodes else names[1][col],
                     "kind": "node" if on_nodes else "edge", "index": col,
                     "importance": float(drops.mean()), "std": float(drops.std())})
    return rows


def target_class_probability(params: GraphModelParams, g: PoliticalGraph, column: int, cls: int) -> float:
    p = float(forward_graph(params, g).graph[column])
    return p if cls == 1 else 1.0 - p


def extract_substructure(params: GraphModelParams, g: PoliticalGraph, budget: int, column: int = 0,
                         target_class: int | None = None) -> tuple[list[tuple[int, int]], float]:
    """Greedy backward edge elimination down to ``budget`` edges.

    Each round deletes the edge whose removal leaves the highest probability
    of the target class (the class predicted on the full graph unless
    given); ties go to the first edge in (src, dst) order.
    """
    if not 0 <= budget <= g.num_edges:
        raise ValueError(f"budget {budget} outside [0, {g.num_edges}]")
    if target_class is None:
        target_class = int(forward_graph(params, g).graph[column] >= 0.5)
    order = np.lexsort((g.dst, g.src))
    cur = g.with_edges(g.src[order], g.dst[order], g.A[order])
    while cur.num_edges > budget:
        best_p, best_k = -np.inf, -1
        for k in range(cur.num_edges):
            keep = np.arange(cur.num_edges) != k
            cand = cur.with_edges(cur.src[keep], cur.dst[keep], cur.A[keep])
            pk = target_class_probability(params, cand, column, target_class)
            if pk > best_p:
                best_p, best_k = pk, k
        keep = np.arange(cur.num_edges) != best_k
        cur = cur.with_edges(cur.src[keep], cur.dst[keep], cur.A[keep])
    edges = [(int(s), int(d)) for s, d in zip(cur.src, cur.dst)]
    return edges, target_class_probability(params, cur, column, target_class)


def holdout_pairs(graphs: Sequence[PoliticalGraph], positives, negatives) -> LinkPairs:
    """Batch-global :class:`LinkPairs` from per-graph positive/negative position arrays."""
    I, J, Y = [], [], []
    off = 0
    for g, pos, neg in zip(graphs, positives, negatives):
        pos, neg = np.asarray(pos).reshape(-1, 2), np.asarray(neg).reshape(-1, 2)
        I += [pos[:, 0] + off, neg[:, 0] + off]
        J += [pos[:, 1] + off, neg[:, 1] + off]
        Y += [np.ones(len(pos)), np.zeros(len(neg))]
        off += g.n
    return LinkPairs(np.concatenate(I).astype(np.int64), np.concatenate(J).astype(np.int64),
                     np.concatenate(Y))
