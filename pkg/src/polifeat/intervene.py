"""Intervention searches over trained models, and a single-round minimax audit.

Every search here is exact: rankings re-evaluate the model on each
candidate, the portfolio is solved by dynamic programming and the action
search degenerates to exhaustive enumeration when the beam is wide enough.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .core import EventSequence, GraphDataset, PoliticalGraph
from .graphlearn import GraphModelParams, forward_batch, forward_graph
from .seqlearn import RnnParams, _outcome, _step, forward_rnn

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Opportunity:
    id: int
    p: float
    cost: int

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError(f"opportunity {self.id}: success probability {self.p} outside [0, 1]")
        if isinstance(self.cost, bool) or not isinstance(self.cost, (int, np.integer)) or self.cost < 1:
            raise ValueError(f"opportunity {self.id}: cost {self.cost!r} must be a positive integer "
                             "(pre-scale fractional costs)")


@dataclass
class RankedItem:
    action: Any
    score: float
    delta: float


@dataclass
class InterventionReport:
    kind: str
    items: list[RankedItem]
    baseline: float
    checkpoint_id: str | None = None
    dataset_id: str | None = None
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def top(self) -> RankedItem | None:
        return self.items[0] if self.items else None

    def to_rows(self) -> list[dict]:
        return [{"rank": r, "action": _fmt_action(it.action), "score": it.score, "delta": it.delta}
                for r, it in enumerate(self.items, 1)]

    def summary(self) -> dict:
        top = self.top
        return {"kind": self.kind, "baseline": self.baseline,
                "top_action": None if top is None else _fmt_action(top.action),
                "value": None if top is None else top.score,
                "checkpoint_id": self.checkpoint_id, "dataset_id": self.dataset_id,
                "seed": self.seed, **self.extra}


def _fmt_action(a) -> str:
    if isinstance(a, tuple):
        return " ".join(_fmt_action(x) for x in a) if a and isinstance(a[0], tuple) else \
            "(" + ",".join(str(x) for x in a) + ")"
    return str(a)


# Graph interventions ---------------------------------------------------

def rank_edge_additions(params: GraphModelParams, g: PoliticalGraph, candidates: Sequence, outcome: int = 0,
                        **ids) -> InterventionReport:
    """Rank candidate edges ``(i, j, features)`` by the change they cause in
    graph output ``outcome``; descending delta, ties by (i, j)."""
    if not 0 <= outcome < params.w_out.shape[0]:
        raise ValueError(f"outcome index {outcome} out of range")
    base = float(forward_graph(params, g).graph[outcome])
    items = []
    for i, j, feats in candidates:
        if i == j:
            raise ValueError(f"candidate ({i}, {j}) is a self-loop")
        if g.has_edge(i, j):
            raise ValueError(f"candidate edge ({i}, {j}) is already present")
        val = float(forward_graph(params, g.add_edge(i, j, feats)).graph[outcome])
        items.append(RankedItem((int(i), int(j)), val, val - base))
    items.sort(key=lambda it: (-it.delta, it.action))
    return InterventionReport("edge_addition", items, base, **ids)


def nominate_jurisdiction(params: GraphModelParams, ds: GraphDataset, outcome: int = 0) -> tuple[int, float]:
    """Graph id with the highest predicted ``outcome``; ties to the smaller id."""
    if not len(ds):
        raise ValueError("no jurisdictions to nominate from")
    probs, _, _ = forward_batch(params, ds.graphs)
    best = min(range(len(ds)), key=lambda k: (-probs[k, outcome], ds.graphs[k].graph_id))
    return ds.graphs[best].graph_id, float(probs[best, outcome])


def rank_persuadable_nodes(params: GraphModelParams, g: PoliticalGraph, top_k: int) -> list[dict]:
    """Nodes closest to a coin flip on the node head, margin ``|p - 0.5|``
    ascending, ties by node id."""
    if top_k > g.n:
        warnings.warn(f"top_k={top_k} exceeds {g.n} nodes; clamped", RuntimeWarning, stacklevel=2)
        top_k = g.n
    probs = forward_graph(params, g).nodes
    order = sorted(range(g.n), key=lambda k: (abs(probs[k] - 0.5), int(g.node_ids[k])))
    return [{"node": int(g.node_ids[k]), "prob": float(probs[k]), "margin": float(abs(probs[k] - 0.5))}
            for k in order[:top_k]]


def attacker_best(params: GraphModelParams, g: PoliticalGraph, additions: Sequence, outcome: int) -> float:
    """Largest outcome gain over the addition candidates absent from ``g`` (0 if none)."""
    usable = [c for c in additions if not g.has_edge(c[0], c[1])]
    if not usable:
        return 0.0
    return rank_edge_additions(params, g, usable, outcome).items[0].delta


def defend_minimax(params: GraphModelParams, g: PoliticalGraph, removals: Sequence[tuple[int, int]],
                   additions: Sequence, outcome: int = 0) -> dict:
    """Remove the edge that minimizes the attacker's best single addition.

    Returns the chosen removal (None when there are no removal candidates),
    its minimax value, the no-action baseline and the value of every removal.
    Ties go to the earliest removal in the given order.
    """
    baseline = attacker_best(params, g, additions, outcome)
    values = []
    for (i, j) in removals:
        if not g.has_edge(i, j):
            raise ValueError(f"removal candidate ({i}, {j}) is not an edge of the graph")
        values.append(attacker_best(params, g.remove_edge(i, j), additions, outcome))
    if not values:
        return {"removal": None, "value": baseline, "baseline": baseline, "values": []}
    best = min(range(len(values)), key=lambda k: (values[k], k))
    return {"removal": tuple(int(x) for x in removals[best]), "value": values[best],
            "baseline": baseline, "values": values}


# Sequence interventions -------------------------------------------------

def optimize_action_sequence(params: RnnParams, prefix: EventSequence, horizon: int, beam_width: int,
                             action_space: Sequence, outcome: int = 0) -> tuple[tuple[int, ...], float]:
    """Beam search for the action sequence maximizing the final predicted outcome.

    Actions are indices into ``action_space``.  Partial sequences are ranked by
    the outcome after their last action, ties by lexicographic index order;
    with ``beam_width >= len(action_space) ** horizon`` nothing is ever pruned
    and the result is the exhaustive optimum.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not action_space:
        raise ValueError("empty action space")
    acts = [np.asarray(a, dtype=np.float64) for a in action_space]
    _, A = forward_rnn(params, prefix)
    a0 = A[-1] if len(prefix) else np.zeros(params.h)
    beam: list[tuple[tuple[int, ...], np.ndarray, float]] = [((), a0, 0.0)]
    for _ in range(horizon):
        cand = []
        for seq, a, _ in beam:
            for k, x in enumerate(acts):
                a_new = _step(params, a, x)
                cand.append((seq + (k,), a_new, float(_outcome(params, a_new)[outcome])))
        cand.sort(key=lambda c: (-c[2], c[0]))
        beam = cand[:max(beam_width, 1)]
    best = beam[0]
    return best[0], best[2]


def sequence_outcome(params: RnnParams, prefix: EventSequence, actions: Sequence, outcome: int = 0) -> float:
    """Predicted outcome after applying the given action vectors to ``prefix``."""
    _, A = forward_rnn(params, prefix)
    a = A[-1] if len(prefix) else np.zeros(params.h)
    for x in actions:
        a = _step(params, a, np.asarray(x, dtype=np.float64))
    return float(_outcome(params, a)[outcome])


# Portfolio --------------------------------------------------------------

def portfolio_select(opportunities: Sequence[Opportunity], budget: int) -> tuple[list[int], float]:
    """Exact 0/1 knapsack maximizing the expected number of successes.

    ``best[i][b]`` is the best value of items ``i..`` within budget ``b``;
    reconstruction walks forward and takes an item whenever doing so is at
    least as good, so lower ids win among equal-value choices.  The returned
    value is the sum of the chosen probabilities in id order.
    """
    if isinstance(budget, bool) or not isinstance(budget, (int, np.integer)) or budget < 0:
        raise ValueError(f"budget {budget!r} must be a non-negative integer")
    for o in opportunities:
        Opportunity(o.id, o.p, o.cost)
    items = sorted(opportunities, key=lambda o: o.id)
    n = len(items)
    best = np.zeros((n + 1, budget + 1))
    for i in range(n - 1, -1, -1):
        c, p = items[i].cost, items[i].p
        best[i] = best[i + 1]
        if c <= budget:
            take = best[i + 1, :budget + 1 - c] + p
            best[i, c:] = np.maximum(best[i + 1, c:], take)
    chosen, b = [], budget
    for i in range(n):
        c = items[i].cost
        if c <= b and best[i + 1, b - c] + items[i].p >= best[i + 1, b]:
            chosen.append(items[i].id)
            b -= c
    value = 0.0
    for o in items:
        if o.id in chosen:
            value += o.p
    return chosen, value
