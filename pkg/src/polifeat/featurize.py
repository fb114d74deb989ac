"""Legislative record files to graph and sequence datasets, plus splits and
feature normalization.

Record files are newline-delimited JSON, one file per table::

    members.jsonl       {"member_id", "party", "district", "seniority", "chamber"?}
    committees.jsonl    {"committee_id", "member_ids", "chair_id"?}
    sponsorships.jsonl  {"bill_id", "sponsor_id", "cosponsor_ids"}
    votes.jsonl         {"bill_id", "member_id", "vote": "yes" | "no" | "abstain"}
    events.jsonl        {"timestamp", "actor_ids", "outcome"?}

Only ``members.jsonl`` is required.
"""
from __future__ import annotations

import hashlib
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .core import (
    Dims,
    EventSequence,
    GraphDataset,
    PoliticalGraph,
    PolifeatError,
    SequenceDataset,
    require,
    validate_dataset,
)

NODE_FEATURES = ("party", "district_hash", "seniority", "yes_rate")
EDGE_FEATURES = ("shared_committees", "cosponsorships", "chair_link", "reserved")
VOTE_VALUES = {"yes": 1.0, "no": 0.0, "abstain": math.nan}


class ReferentialError(PolifeatError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class EmptyInputError(PolifeatError, ValueError):
    pass


class SplitError(PolifeatError, ValueError):
    pass


@dataclass(frozen=True)
class Member:
    member_id: Any
    party: str
    district: str
    seniority: float
    chamber: str | None = None


@dataclass(frozen=True)
class Committee:
    committee_id: Any
    member_ids: tuple
    chair_id: Any = None


@dataclass(frozen=True)
class Sponsorship:
    bill_id: Any
    sponsor_id: Any
    cosponsor_ids: tuple = ()


@dataclass(frozen=True)
class Vote:
    bill_id: Any
    member_id: Any
    vote: str


@dataclass(frozen=True)
class LogEvent:
    timestamp: float
    actor_ids: tuple
    outcome: float | None = None


@dataclass(frozen=True)
class RecordBundle:
    members: tuple[Member, ...]
    committees: tuple[Committee, ...] = ()
    sponsorships: tuple[Sponsorship, ...] = ()
    votes: tuple[Vote, ...] = ()
    events: tuple[LogEvent, ...] | None = None

    def validate(self):
        ids = {m.member_id for m in self.members}
        if len(ids) != len(self.members):
            raise ReferentialError("duplicate member id in roster")

        def check(mid, where):
            if mid not in ids:
                raise ReferentialError(f"unknown member id {mid!r} in {where}")

        for c in self.committees:
            for mid in c.member_ids:
                check(mid, f"committee {c.committee_id!r}")
            if c.chair_id is not None:
                check(c.chair_id, f"chair of committee {c.committee_id!r}")
        for s in self.sponsorships:
            for mid in (s.sponsor_id, *s.cosponsor_ids):
                check(mid, f"sponsorship of bill {s.bill_id!r}")
        for v in self.votes:
            check(v.member_id, f"vote on bill {v.bill_id!r}")
            if v.vote not in VOTE_VALUES:
                raise ValueError(f"vote {v.vote!r} on bill {v.bill_id!r} is not yes/no/abstain")
        if self.events:
            for e in self.events:
                for mid in e.actor_ids:
                    check(mid, f"event at t={e.timestamp}")
            ts = [e.timestamp for e in self.events]
            if any(b < a for a, b in zip(ts, ts[1:])):
                raise ValueError("event timestamps must be non-decreasing")


def _read_jsonl(path: Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path.name} line {lineno}: {exc.msg}") from None
    return out


def load_records(directory: str | Path) -> RecordBundle:
    d = Path(directory)

    def table(name):
        p = d / f"{name}.jsonl"
        return _read_jsonl(p) if p.exists() else None

    members = table("members")
    if members is None:
        raise EmptyInputError(f"{d}/members.jsonl not found")
    events = table("events")
    bundle = RecordBundle(
        tuple(Member(r["member_id"], str(r["party"]), str(r["district"]), float(r["seniority"]),
                     r.get("chamber")) for r in members),
        tuple(Committee(r["committee_id"], tuple(r["member_ids"]), r.get("chair_id"))
              for r in table("committees") or ()),
        tuple(Sponsorship(r["bill_id"], r["sponsor_id"], tuple(r.get("cosponsor_ids", ())))
              for r in table("sponsorships") or ()),
        tuple(Vote(r["bill_id"], r["member_id"], r["vote"]) for r in table("votes") or ()),
        None if events is None else tuple(
            LogEvent(float(r["timestamp"]), tuple(r["actor_ids"]), r.get("outcome")) for r in events),
    )
    bundle.validate()
    return bundle


def district_hash(district: str) -> float:
    """Stable hash of a district name into [0, 1): first 8 bytes of SHA-256 / 2**64."""
    digest = hashlib.sha256(district.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2.0 ** 64


def party_codes(members: Sequence[Member]) -> dict[str, float]:
    """Largest party +1, second largest -1 (ties by name), any other party 0."""
    counts = Counter(m.party for m in members)
    ranked = sorted(counts, key=lambda p: (-counts[p], p))
    codes = {p: 0.0 for p in ranked}
    for p, code in zip(ranked[:2], (1.0, -1.0)):
        codes[p] = code
    return codes


def member_node_ids(members: Sequence[Member]) -> list[int]:
    """Graph node ids: the member ids themselves when they are all
    non-negative integers, roster positions otherwise."""
    ids = [m.member_id for m in members]
    if all(isinstance(i, int) and not isinstance(i, bool) and i >= 0 for i in ids):
        return ids
    return list(range(len(ids)))


def _bills(r: RecordBundle) -> list:
    seen: dict = {}
    for s in r.sponsorships:
        seen.setdefault(s.bill_id, None)
    for v in r.votes:
        seen.setdefault(v.bill_id, None)
    return list(seen)


def build_graphs_from_records(r: RecordBundle) -> GraphDataset:
    """One graph per bill over the members of the bill's chamber.

    Members sharing a committee are linked in both directions.  Edge features:
    shared-committee count and pairwise co-sponsorship count (each divided by
    its maximum over all member pairs), a chair-link indicator, and a
    reserved zero.  Node features: party code, district hash, seniority over
    its maximum, and the yes-rate over the member's votes on *other* bills
    (0.5 without history).  Node labels are the votes on the bill (abstain or
    missing -> absent); the graph label is ``[yes_share > 0.5, yes_share]``
    with yes_share = yes / (yes + no).
    """
    if not r.members:
        raise EmptyInputError("record bundle has no members")
    r.validate()
    members = list(r.members)
    pos = {m.member_id: i for i, m in enumerate(members)}
    n_all = len(members)
    node_id = member_node_ids(members)

    shared = np.zeros((n_all, n_all))
    chair = np.zeros((n_all, n_all))
    for c in r.committees:
        idx = sorted({pos[mid] for mid in c.member_ids})
        for a, b in combinations(idx, 2):
            shared[a, b] += 1
            shared[b, a] += 1
        if c.chair_id is not None:
            ch = pos[c.chair_id]
            for a in idx:
                if a != ch:
                    chair[a, ch] = chair[ch, a] = 1.0
    cospon = np.zeros((n_all, n_all))
    for s in r.sponsorships:
        idx = sorted({pos[mid] for mid in (s.sponsor_id, *s.cosponsor_ids)})
        for a, b in combinations(idx, 2):
            cospon[a, b] += 1
            cospon[b, a] += 1
    shared_s = shared / shared.max() if shared.max() > 0 else shared
    cospon_s = cospon / cospon.max() if cospon.max() > 0 else cospon

    codes = party_codes(members)
    max_sen = max(m.seniority for m in members)
    base = np.array([[codes[m.party], district_hash(m.district),
                      m.seniority / max_sen if max_sen > 0 else 0.0] for m in members])

    votes_by_bill: dict = defaultdict(dict)
    for v in r.votes:
        votes_by_bill[v.bill_id][pos[v.member_id]] = VOTE_VALUES[v.vote]
    yes_tot, cast_tot = np.zeros(n_all), np.zeros(n_all)
    for bv in votes_by_bill.values():
        for i, val in bv.items():
            if not math.isnan(val):
                yes_tot[i] += val
                cast_tot[i] += 1

    sponsor_of = {s.bill_id: pos[s.sponsor_id] for s in r.sponsorships}
    has_chamber = all(m.chamber is not None for m in members)

    graphs = []
    bills = _bills(r)
    for k, bill in enumerate(bills):
        bv = votes_by_bill.get(bill, {})
        nodes = list(range(n_all))
        if has_chamber:
            anchor = sponsor_of.get(bill, min(bv) if bv else None)
            if anchor is not None:
                nodes = [i for i in range(n_all) if members[i].chamber == members[anchor].chamber]
        yes_o, cast_o = yes_tot.copy(), cast_tot.copy()
        for i, val in bv.items():
            if not math.isnan(val):
                yes_o[i] -= val
                cast_o[i] -= 1
        rate = np.where(cast_o > 0, yes_o / np.maximum(cast_o, 1), 0.5)
        X = np.column_stack([base[nodes], rate[nodes]])
        src, dst, feats = [], [], []
        for a in nodes:
            for b in nodes:
                if a != b and shared[a, b] > 0:
                    src.append(node_id[a])
                    dst.append(node_id[b])
                    feats.append([shared_s[a, b], cospon_s[a, b], chair[a, b], 0.0])
        labels = np.array([bv.get(i, math.nan) for i in nodes])
        cast = labels[np.isfinite(labels)]
        share = float(cast.mean()) if cast.size else 0.0
        graphs.append(PoliticalGraph(k, [node_id[i] for i in nodes], X, src, dst, np.array(feats).reshape(len(src), 4),
                                     [float(share > 0.5), share], labels))
    ds = GraphDataset(tuple(graphs), Dims(4, 4, 2, ("binary", "real")),
                      {"member_ids": [m.member_id for m in members], "bill_ids": bills},
                      (NODE_FEATURES, EDGE_FEATURES))
    require(validate_dataset(ds), "graphs built from records")
    return ds


def encode_event_log(r: RecordBundle, roster: Sequence) -> EventSequence:
    """Roster-ordered presence bits per timestamp; equal timestamps are merged
    (bits OR-ed, last non-null outcome kept)."""
    col = {mid: i for i, mid in enumerate(roster)}
    steps: dict[float, list] = {}
    for e in r.events or ():
        x, y = steps.setdefault(e.timestamp, [np.zeros(len(roster)), math.nan])
        for mid in e.actor_ids:
            if mid not in col:
                raise ReferentialError(f"actor {mid!r} at t={e.timestamp} is not in the roster")
            x[col[mid]] = 1.0
        if e.outcome is not None:
            steps[e.timestamp][1] = float(e.outcome)
    if not steps:
        return EventSequence.empty(len(roster), 1)
    ts = sorted(steps)
    return EventSequence(ts, np.array([steps[t][0] for t in ts]),
                         np.array([[steps[t][1]] for t in ts]), True)


# Splits -----------------------------------------------------------------

@dataclass(frozen=True)
class SplitPolicy:
    kind: str = "by_graph_random"
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def validate(self):
        if self.kind not in ("by_graph_random", "by_time"):
            raise SplitError(f"unknown split kind {self.kind!r}")
        if len(self.fractions) != 3 or min(self.fractions) <= 0:
            raise SplitError(f"fractions {self.fractions} must be three positive numbers")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise SplitError(f"fractions {self.fractions} must sum to 1")


def _sizes(K: int, fractions) -> tuple[int, int, int]:
    n_train = int(math.floor(K * fractions[0] + 0.5))
    n_val = int(math.floor(K * fractions[1] + 0.5))
    sizes = (n_train, n_val, K - n_train - n_val)
    if min(sizes) <= 0:
        raise SplitError(f"fractions {tuple(fractions)} leave an empty split for {K} items: {sizes}")
    return sizes


def split_dataset(ds: GraphDataset | SequenceDataset, policy: SplitPolicy):
    """Disjoint, exhaustive (train, val, test) partition.

    Graphs: ``by_graph_random`` permutes with the policy seed, ``by_time``
    orders by graph id.  Sequences: ``by_graph_random`` partitions whole
    sequences; ``by_time`` cuts every sequence at two global timestamps so
    every train event precedes every val event precedes every test event.
    """
    policy.validate()
    if isinstance(ds, GraphDataset):
        if not len(ds):
            raise SplitError("cannot split an empty dataset")
        sizes = _sizes(len(ds), policy.fractions)
        if policy.kind == "by_graph_random":
            order = np.random.default_rng(np.random.SeedSequence([int(policy.seed), 9])).permutation(len(ds))
        else:
            order = np.argsort([g.graph_id for g in ds.graphs], kind="stable")
        cuts = np.cumsum(sizes)[:2]
        return tuple(ds.subset(sorted(part.tolist())) for part in np.split(order, cuts))
    if isinstance(ds, SequenceDataset):
        if not len(ds):
            raise SplitError("cannot split an empty dataset")
        if policy.kind == "by_graph_random":
            sizes = _sizes(len(ds), policy.fractions)
            order = np.random.default_rng(np.random.SeedSequence([int(policy.seed), 9])).permutation(len(ds))
            parts = np.split(order, np.cumsum(sizes)[:2])
            return tuple(_seq_subset(ds, sorted(p.tolist())) for p in parts)
        times = np.unique(np.concatenate([s.t for s in ds.sequences]))
        sizes = _sizes(len(times), policy.fractions)
        t1, t2 = times[sizes[0]], times[sizes[0] + sizes[1]]
        out = []
        for lo, hi in ((-np.inf, t1), (t1, t2), (t2, np.inf)):
            parts = [s.slice((s.t >= lo) & (s.t < hi)) for s in ds.sequences]
            keep = [i for i, s in enumerate(parts) if len(s)]
            gt = None if ds.ground_truth is None else [ds.ground_truth[i] for i in keep]
            out.append(SequenceDataset(tuple(parts[i] for i in keep), ds.d, ds.q, gt))
        return tuple(out)
    raise TypeError(f"cannot split {type(ds).__name__}")


def _seq_subset(ds: SequenceDataset, idx) -> SequenceDataset:
    gt = None if ds.ground_truth is None else [ds.ground_truth[i] for i in idx]
    return SequenceDataset(tuple(ds.sequences[i] for i in idx), ds.d, ds.q, gt)


# Normalization ----------------------------------------------------------

@dataclass(frozen=True)
class NormStats:
    node_mean: tuple[float, ...]
    node_std: tuple[float, ...]
    edge_mean: tuple[float, ...]
    edge_std: tuple[float, ...]

    def to_json(self) -> dict:
        return {k: list(getattr(self, k)) for k in ("node_mean", "node_std", "edge_mean", "edge_std")}

    @classmethod
    def from_json(cls, obj) -> "NormStats":
        return cls(*(tuple(float(x) for x in obj[k]) for k in ("node_mean", "node_std", "edge_mean", "edge_std")))

    def apply(self, ds: GraphDataset) -> GraphDataset:
        nm, ns = np.array(self.node_mean), np.array(self.node_std)
        em, es = np.array(self.edge_mean), np.array(self.edge_std)
        n_scale, e_scale = ns > 0, es > 0

        def z(M, mean, std, scale):
            out = M.copy()
            out[:, scale] = (M[:, scale] - mean[scale]) / std[scale]
            return out

        return ds.with_graphs([g.replace(X=z(g.X, nm, ns, n_scale),
                                         A=z(g.A, em, es, e_scale) if g.num_edges else g.A)
                               for g in ds.graphs])


def _column_stats(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if M.shape[0] == 0:
        return np.zeros(M.shape[1]), np.zeros(M.shape[1])
    mean = M.mean(axis=0)
    std = M.std(axis=0)
    const = M.max(axis=0) == M.min(axis=0)
    std[const] = 0.0
    return mean, std


def normalize_features(train: GraphDataset, *others: GraphDataset):
    """Z-score node and edge feature columns with train-only statistics.

    Constant columns (max == min over train) keep their values and record a
    standard deviation of 0.  Returns ``(train_norm, [others_norm...], stats)``.
    """
    if not len(train):
        raise EmptyInputError("normalization needs a non-empty training set")
    X = np.vstack([g.X for g in train.graphs])
    A = np.vstack([g.A for g in train.graphs if g.num_edges] or [np.zeros((0, train.dims.p))])
    nm, ns = _column_stats(X)
    em, es = _column_stats(A)
    stats = NormStats(tuple(nm.tolist()), tuple(ns.tolist()), tuple(em.tolist()), tuple(es.tolist()))
    return stats.apply(train), [stats.apply(o) for o in others], stats


@dataclass(frozen=True)
class EdgeHoldout:
    """Observed graphs with held-out edges removed, plus the evaluation pairs.

    ``positives[k]`` / ``negatives[k]`` are (count, 2) arrays of node
    positions in graph k; negatives are absent from the *full* graph and
    match the positives in number.
    """

    observed: GraphDataset
    positives: tuple[np.ndarray, ...]
    negatives: tuple[np.ndarray, ...]


def split_edges(ds: GraphDataset, fraction: float = 0.2, seed: int = 0) -> EdgeHoldout:
    """Hold out ``round(fraction * E)`` random edges per graph for link evaluation."""
    if not 0 < fraction < 1:
        raise SplitError(f"edge hold-out fraction {fraction} must lie in (0, 1)")
    observed, pos, neg = [], [], []
    for g in ds.graphs:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 12, g.graph_id]))
        E = g.num_edges
        k = int(math.floor(fraction * E + 0.5))
        held = np.sort(rng.permutation(E)[:k])
        keep = np.setdiff1d(np.arange(E), held)
        observed.append(g.with_edges(g.src[keep], g.dst[keep], g.A[keep]))
        pos.append(np.column_stack([g.src_idx[held], g.dst_idx[held]]).reshape(-1, 2))
        taken = np.zeros((g.n, g.n), dtype=bool)
        taken[g.src_idx, g.dst_idx] = True
        np.fill_diagonal(taken, True)
        free = np.flatnonzero(~taken.ravel())
        pick = np.sort(rng.choice(free, size=min(k, len(free)), replace=False)) if k else np.zeros(0, int)
        neg.append(np.column_stack([pick // g.n, pick % g.n]).reshape(-1, 2))
    return EdgeHoldout(ds.with_graphs(observed), tuple(pos), tuple(neg))
