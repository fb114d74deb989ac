import json
import math
from pathlib import Path

import numpy as np
import pytest

from polifeat.core import Dims, GraphDataset, PoliticalGraph, validate_dataset
from polifeat.featurize import (
    Committee,
    EmptyInputError,
    LogEvent,
    Member,
    RecordBundle,
    ReferentialError,
    SplitError,
    SplitPolicy,
    Sponsorship,
    Vote,
    build_graphs_from_records,
    district_hash,
    encode_event_log,
    load_records,
    normalize_features,
    split_dataset,
    split_edges,
)
from polifeat.synthgen import GraphGenConfig, SeqGenConfig, gen_graph_dataset, gen_sequences

FIXTURES = Path(__file__).parent / "fixtures"


def members(*ids):
    return tuple(Member(i, "D" if i % 2 else "R", f"d{i}", float(i)) for i in ids)


def edge_set(g):
    return set(zip(g.src.tolist(), g.dst.tolist()))


def test_co_membership_edges():
    r = RecordBundle(members(1, 2, 3), (Committee("A", (1, 2)), Committee("B", (2, 3))),
                     votes=(Vote("x", 1, "yes"),))
    (g,) = build_graphs_from_records(r).graphs
    assert edge_set(g) == {(1, 2), (2, 1), (2, 3), (3, 2)}


def test_no_committees_no_edges():
    r = RecordBundle(members(1, 2, 3), votes=(Vote("x", 1, "yes"), Vote("y", 2, "no")))
    ds = build_graphs_from_records(r)
    assert len(ds) == 2 and all(g.num_edges == 0 for g in ds.graphs)


def test_golden_fixture():
    ds = build_graphs_from_records(load_records(FIXTURES / "records"))
    want = json.loads((FIXTURES / "records_expected.json").read_text())
    assert validate_dataset(ds).ok
    assert ds.ground_truth["bill_ids"] == list(want["bills"])
    for g, (bill, exp) in zip(ds.graphs, want["bills"].items()):
        assert g.node_ids.tolist() == want["node_ids"]
        assert [(int(s), int(d), a.tolist()) for s, d, a in zip(g.src, g.dst, g.A)] == \
            [(s, d, [float(x) for x in a]) for s, d, a in want["edges"]]
        assert g.X[:, 0].tolist() == want["party"]
        assert g.X[:, 1].tolist() == [district_hash(f"d{k}") for k in (1, 2, 1, 3, 2)]
        assert g.X[:, 2].tolist() == want["seniority"]
        assert g.X[:, 3].tolist() == exp["yes_rate"], bill
        votes = [None if math.isnan(v) else v for v in g.node_labels.tolist()]
        assert votes == exp["votes"], bill
        assert g.label.tolist() == exp["label"], bill


def test_golden_event_log():
    r = load_records(FIXTURES / "records")
    want = json.loads((FIXTURES / "records_expected.json").read_text())
    s = encode_event_log(r, want["event_roster"])
    assert s.t.tolist() == want["event_times"]
    assert s.X.tolist() == want["event_bits"]
    assert [None if math.isnan(y) else y for y in s.Y[:, 0]] == want["event_outcomes"]
    assert s.binary_x and s.X.shape[1] == 4


def test_event_log_edges():
    r = RecordBundle(members(1, 2), events=())
    assert len(encode_event_log(r, [1, 2])) == 0
    r = RecordBundle(members(1, 2), events=(LogEvent(0.0, (1, 2)),))
    assert encode_event_log(r, [1, 2]).X.tolist() == [[1.0, 1.0]]
    with pytest.raises(ReferentialError, match="2"):
        encode_event_log(r, [1])


def test_referential_and_empty_errors():
    with pytest.raises(ReferentialError, match="99"):
        build_graphs_from_records(RecordBundle(members(1, 2), (Committee("A", (1, 99)),)))
    with pytest.raises(ReferentialError, match="7"):
        build_graphs_from_records(RecordBundle(members(1), sponsorships=(Sponsorship("b", 7),)))
    with pytest.raises(EmptyInputError):
        build_graphs_from_records(RecordBundle(()))


def test_missing_members_file(tmp_path):
    with pytest.raises(EmptyInputError):
        load_records(tmp_path)


def test_chamber_restricts_nodes():
    ms = (Member(1, "D", "a", 1, "house"), Member(2, "R", "b", 1, "house"), Member(3, "D", "c", 1, "senate"))
    r = RecordBundle(ms, (Committee("A", (1, 2, 3)),), (Sponsorship("h1", 1),), (Vote("h1", 2, "no"),))
    (g,) = build_graphs_from_records(r).graphs
    assert g.node_ids.tolist() == [1, 2] and edge_set(g) == {(1, 2), (2, 1)}


def test_edge_symmetry_on_random_records():
    rng = np.random.default_rng(0)
    ms = members(*range(10))
    comms = tuple(Committee(c, tuple(rng.choice(10, size=4, replace=False).tolist()), int(rng.integers(10)) if c % 2 else None)
                  for c in range(4))
    comms = tuple(Committee(c.committee_id, c.member_ids, c.chair_id if c.chair_id in c.member_ids else None) for c in comms)
    spons = tuple(Sponsorship(b, int(rng.integers(10)), tuple(rng.choice(10, 2, replace=False).tolist())) for b in range(5))
    ds = build_graphs_from_records(RecordBundle(ms, comms, spons))
    for g in ds.graphs:
        feats = {(int(s), int(d)): a.tolist() for s, d, a in zip(g.src, g.dst, g.A)}
        for (s, d), a in feats.items():
            assert feats[(d, s)] == a


def test_split_sizes_and_disjointness():
    ds = gen_graph_dataset(GraphGenConfig(K=10, n=4), seed=0)
    parts = split_dataset(ds, SplitPolicy("by_graph_random", (0.8, 0.1, 0.1), seed=1))
    assert tuple(len(p) for p in parts) == (8, 1, 1)
    ids = [g.graph_id for p in parts for g in p.graphs]
    assert sorted(ids) == list(range(10))
    again = split_dataset(ds, SplitPolicy("by_graph_random", (0.8, 0.1, 0.1), seed=1))
    assert [[g.graph_id for g in p.graphs] for p in parts] == [[g.graph_id for g in p.graphs] for p in again]


def test_split_by_time_on_sequences():
    ds = gen_sequences(SeqGenConfig(d=3, T=20), 3, seed=0)
    train, val, test = split_dataset(ds, SplitPolicy("by_time", (0.6, 0.2, 0.2)))
    t_train = max(s.t.max() for s in train.sequences)
    assert t_train < min(s.t.min() for s in val.sequences)
    assert t_train < min(s.t.min() for s in test.sequences)
    assert sum(len(s) for p in (train, val, test) for s in p.sequences) == 60


def test_split_by_time_on_graphs_orders_ids():
    ds = gen_graph_dataset(GraphGenConfig(K=10, n=4), seed=0)
    train, _, test = split_dataset(ds, SplitPolicy("by_time"))
    assert max(g.graph_id for g in train.graphs) < min(g.graph_id for g in test.graphs)


def test_split_errors():
    ds = gen_graph_dataset(GraphGenConfig(K=3, n=4), seed=0)
    with pytest.raises(SplitError):
        split_dataset(ds, SplitPolicy(fractions=(0.8, 0.1, 0.1)))
    with pytest.raises(SplitError):
        split_dataset(ds, SplitPolicy(fractions=(0.5, 0.2, 0.2)))
    with pytest.raises(SplitError):
        split_dataset(ds, SplitPolicy(kind="random"))


def _two_graph_fixture():
    g1 = PoliticalGraph(0, [0, 1], [[1.0, 5.0], [3.0, 5.0]], [0], [1], [[2.0]], [1.0])
    g2 = PoliticalGraph(1, [0, 1], [[5.0, 5.0], [7.0, 5.0]], [1], [0], [[4.0]], [0.0])
    return GraphDataset((g1,), Dims(2, 1, 1)), GraphDataset((g2,), Dims(2, 1, 1))


def test_normalization_by_hand():
    train, test = _two_graph_fixture()
    tr, (te,), stats = normalize_features(train, test)
    # train column 0 is {1, 3}: mean 2, population std 1; column 1 is constant
    assert stats.node_mean == (2.0, 5.0) and stats.node_std == (1.0, 0.0)
    assert tr.graphs[0].X.tolist() == [[-1.0, 5.0], [1.0, 5.0]]
    assert te.graphs[0].X.tolist() == [[3.0, 5.0], [5.0, 5.0]]
    # a single training edge makes the edge column constant
    assert stats.edge_std == (0.0,) and te.graphs[0].A.tolist() == [[4.0]]


def test_normalization_moments_and_idempotence():
    ds = gen_graph_dataset(GraphGenConfig(K=20, n=8), seed=2)
    tr, _, stats = normalize_features(ds)
    X = np.vstack([g.X for g in tr.graphs])
    live = np.array(stats.node_std) > 0
    assert np.all(np.abs(X[:, live].mean(axis=0)) < 1e-9)
    assert np.all(np.abs(X[:, live].std(axis=0) - 1) < 1e-9)
    tr2, _, _ = normalize_features(tr)
    for a, b in zip(tr.graphs, tr2.graphs):
        assert np.max(np.abs(a.X - b.X)) <= 1e-9 and np.max(np.abs(a.A - b.A), initial=0) <= 1e-9


def test_split_edges_matched_negatives():
    ds = gen_graph_dataset(GraphGenConfig(K=5, n=12), seed=3)
    h = split_edges(ds, 0.2, seed=4)
    for g, obs, pos, neg in zip(ds.graphs, h.observed.graphs, h.positives, h.negatives):
        assert len(pos) == len(neg) == round(0.2 * g.num_edges)
        assert obs.num_edges == g.num_edges - len(pos)
        full = set(zip(g.src_idx.tolist(), g.dst_idx.tolist()))
        assert all(tuple(p) in full for p in pos.tolist())
        assert not any(tuple(q) in full or q[0] == q[1] for q in neg.tolist())
        kept = set(zip(obs.src_idx.tolist(), obs.dst_idx.tolist()))
        assert kept.isdisjoint(map(tuple, pos.tolist()))
    with pytest.raises(SplitError):
        split_edges(ds, 1.0)
