import numpy as np
import pytest

from polifeat.core import Dims, EventSequence, GraphDataset, PoliticalGraph
from polifeat.graphlearn import forward_graph, init_model
from polifeat.intervene import (
    Opportunity,
    defend_minimax,
    nominate_jurisdiction,
    optimize_action_sequence,
    portfolio_select,
    rank_edge_additions,
    rank_persuadable_nodes,
    sequence_outcome,
)
from polifeat.seqlearn import forward_rnn, init_rnn
from helpers import random_dataset, random_graph, random_model
from oracles import exhaustive_action_sequences, gnn_forward_loops, knapsack_bruteforce


def absent_pairs(g, rng, k):
    pairs = [(int(a), int(b)) for a in g.node_ids for b in g.node_ids if a != b and not g.has_edge(a, b)]
    rng.shuffle(pairs)
    return [(i, j, rng.uniform(0.1, 1.0, g.A.shape[1])) for i, j in pairs[:k]]


def graph_output(P, g, outcome=0):
    return float(gnn_forward_loops(P, g)[0][outcome])


def test_empty_candidates_report_baseline():
    ds = random_dataset(0, K=1)
    P = random_model(ds)
    rep = rank_edge_additions(P, ds.graphs[0], [])
    assert rep.items == [] and abs(rep.baseline - graph_output(P, ds.graphs[0])) <= 1e-12


def test_ignored_edges_give_zero_deltas():
    ds = random_dataset(1, K=1, n=5)
    P = random_model(ds, 1)
    P.W_nbr[...] = 0.0
    rng = np.random.default_rng(1)
    rep = rank_edge_additions(P, ds.graphs[0], absent_pairs(ds.graphs[0], rng, 6))
    assert len(rep.items) == 6 and all(it.delta == 0.0 for it in rep.items)
    # all tied: order falls back to (i, j)
    assert [it.action for it in rep.items] == sorted(it.action for it in rep.items)


def test_present_candidate_rejected():
    g = PoliticalGraph(0, [0, 1], np.ones((2, 2)), [0], [1], np.ones((1, 2)), [1.0])
    P = init_model(Dims(2, 2, 1), 2, 3)
    with pytest.raises(ValueError, match="already present"):
        rank_edge_additions(P, g, [(0, 1, [1.0, 1.0])])


@pytest.mark.parametrize("seed", range(50))
def test_edge_ranking_top1_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 6, edge_prob=0.3)
    P = random_model(GraphDataset((g,), Dims(2, 2, 1)), seed)
    cands = absent_pairs(g, rng, 20)
    rep = rank_edge_additions(P, g, cands)
    base = graph_output(P, g)
    scores = {(i, j): graph_output(P, g.add_edge(i, j, a)) - base for i, j, a in cands}
    best = max(scores.values())
    assert rep.top.action == min(k for k, v in scores.items() if v == best)
    assert sorted(it.action for it in rep.items) == sorted(scores)
    for it in rep.items:
        assert abs(it.delta - scores[it.action]) <= 1e-12


@pytest.mark.parametrize("seed", range(50))
def test_nomination_matches_scan(seed):
    ds = random_dataset(seed, K=50 if seed < 5 else 8, n=4)
    P = random_model(ds, seed)
    gid, prob = nominate_jurisdiction(P, ds)
    scan = [(graph_output(P, g), -g.graph_id) for g in ds.graphs]
    best = max(scan)
    assert gid == -best[1] and abs(prob - best[0]) <= 1e-12


def test_nomination_ties_and_single():
    ds = random_dataset(3, K=1)
    P = random_model(ds, 3)
    assert nominate_jurisdiction(P, ds)[0] == 0
    g = ds.graphs[0]
    twins = GraphDataset((g.replace(graph_id=9), g.replace(graph_id=4)), ds.dims)
    assert nominate_jurisdiction(P, twins)[0] == 4


def _node_prob_model(logits):
    """h = 1 model whose final embedding is tanh(arctanh(logit)) = logit for each node."""
    P = init_model(Dims(1, 1, 1), L=1, h=1).zeros_like()
    P.W_in[...] = 1.0
    P.W_self[...] = 1.0
    P.w_node[...] = 1.0
    n = len(logits)
    g = PoliticalGraph(0, list(range(n)), np.arctanh(np.asarray(logits))[:, None], [], [], np.zeros((0, 1)), [0.0])
    return P, g


def test_persuadable_margin_order():
    target = np.array([0.9, 0.55, 0.2])
    P, g = _node_prob_model(np.log(target / (1 - target)) / 3)
    P.w_node[...] = 3.0
    probs = forward_graph(P, g).nodes
    assert np.allclose(probs, target, atol=1e-12)
    ranked = rank_persuadable_nodes(P, g, 3)
    assert [r["node"] for r in ranked] == [1, 2, 0]
    assert [round(r["margin"], 12) for r in ranked] == [0.05, 0.3, 0.4]


def test_persuadable_ties_and_clamp():
    P, g = _node_prob_model(np.zeros(4))
    with pytest.warns(RuntimeWarning):
        ranked = rank_persuadable_nodes(P, g, 10)
    assert [r["node"] for r in ranked] == [0, 1, 2, 3]


def test_action_search_horizon_one_is_argmax():
    P = init_rnn(3, 1, 4, seed=1)
    P.w_y[...] = np.random.default_rng(1).normal(size=(1, 4))
    prefix = EventSequence([0.0], [[1, 0, 1]], [[1.0]])
    space = [[0, 0, 0], [1, 0, 0], [0, 1, 1], [1, 1, 1]]
    seq, val = optimize_action_sequence(P, prefix, 1, 1, space)
    vals = [sequence_outcome(P, prefix, [a]) for a in space]
    assert seq == (int(np.argmax(vals)),) and val == max(vals)


@pytest.mark.parametrize("seed", range(50))
def test_wide_beam_equals_exhaustive(seed):
    rng = np.random.default_rng(seed)
    d, h = 3, 4
    P = init_rnn(d, 1, h, seed=seed)
    P = P.from_vector(P.flat() + rng.normal(scale=0.5, size=P.flat().size))
    prefix = EventSequence(np.arange(2.0), (rng.random((2, d)) < 0.5).astype(float), np.full((2, 1), np.nan))
    space = [(rng.random(d) < 0.5).astype(float) for _ in range(int(rng.integers(2, 4)))]
    horizon = int(rng.integers(1, 4))
    seq, val = optimize_action_sequence(P, prefix, horizon, len(space) ** horizon, space)

    def score(actions):
        # independent replay: full forward pass on the extended sequence
        X = np.vstack([prefix.X] + [space[k] for k in actions])
        ext = EventSequence(np.arange(len(X), dtype=float), X, np.full((len(X), 1), np.nan))
        return forward_rnn(P, ext)[0][-1, 0]

    best_seq, best = exhaustive_action_sequences(score, len(space), horizon)
    assert seq == best_seq and val == best


def test_constant_outcome_picks_lexicographic_first():
    P = init_rnn(2, 1, 3, seed=0)
    P.w_y[...] = 0.0
    seq, val = optimize_action_sequence(P, EventSequence.empty(2, 1), 3, 27, [[0, 1], [1, 0], [1, 1]])
    assert seq == (0, 0, 0) and val == 0.5


def test_portfolio_examples():
    assert portfolio_select([Opportunity(0, 0.5, 1)], 0) == ([], 0.0)
    opps = [Opportunity(0, 0.9, 2), Opportunity(1, 0.6, 1), Opportunity(2, 0.5, 1)]
    chosen, value = portfolio_select(opps, 2)
    assert chosen == [1, 2] and value == 0.6 + 0.5
    with pytest.raises(ValueError):
        Opportunity(3, 0.5, 1.5)


def test_portfolio_prefers_lower_ids_on_ties():
    opps = [Opportunity(2, 0.5, 1), Opportunity(0, 0.5, 1), Opportunity(1, 0.5, 1)]
    assert portfolio_select(opps, 2)[0] == [0, 1]


@pytest.mark.parametrize("seed", range(100))
def test_portfolio_matches_exhaustive(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 16))
    opps = [Opportunity(i, float(rng.random()), int(rng.integers(1, 6))) for i in range(k)]
    budget = int(rng.integers(0, 20))
    chosen, value = portfolio_select(opps, budget)
    best, _ = knapsack_bruteforce(opps, budget)
    assert value == best
    assert sum(o.cost for o in opps if o.id in chosen) <= budget
    if budget < 19:
        assert portfolio_select(opps, budget + 1)[1] >= value


def test_defend_degenerate_cases():
    ds = random_dataset(4, K=1, n=5, edge_prob=0.5)
    g, P = ds.graphs[0], random_model(ds, 4)
    rng = np.random.default_rng(4)
    adds = absent_pairs(g, rng, 4)
    res = defend_minimax(P, g, [], adds)
    assert res["removal"] is None and res["value"] == res["baseline"]
    removals = list(zip(g.src.tolist(), g.dst.tolist()))[:3]
    res = defend_minimax(P, g, removals, [])
    assert res["removal"] == removals[0] and res["values"] == [0.0] * 3


@pytest.mark.parametrize("seed", range(50))
def test_defend_matches_double_loop(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 6, edge_prob=0.35)
    P = random_model(GraphDataset((g,), Dims(2, 2, 1)), seed)
    removals = [(int(s), int(d)) for s, d in zip(g.src, g.dst)][:10]
    adds = absent_pairs(g, rng, 10)
    res = defend_minimax(P, g, removals, adds)
    values = []
    for r in removals:
        h = g.remove_edge(*r)
        base = graph_output(P, h)
        gains = [graph_output(P, h.add_edge(i, j, a)) - base for i, j, a in adds if not h.has_edge(i, j)]
        values.append(max(gains) if gains else 0.0)
    if removals:
        k = int(np.argmin(values))
        assert res["removal"] == removals[k] and abs(res["value"] - values[k]) <= 1e-12
        assert np.allclose(res["values"], values, rtol=0, atol=1e-12)
        assert res["value"] <= max(values)


@pytest.fixture(scope="module")
def persuadability_overlaps():
    from polifeat.featurize import normalize_features
    from polifeat.graphlearn import TrainConfig, train
    from polifeat.synthgen import GraphGenConfig, gen_graph_dataset, planted_vote_probabilities

    ds = gen_graph_dataset(GraphGenConfig(K=200), seed=0)
    tr, _, stats = normalize_features(ds)
    P, _ = train(init_model(ds.dims, 2, 16, 0), tr, None, TrainConfig(lr=0.5, epochs=200, task="node_label"))
    overlaps = []
    for seed in range(10):
        test = gen_graph_dataset(GraphGenConfig(K=1), seed=100 + seed)
        pi = planted_vote_probabilities(test, 0)
        truth = set(np.argsort(np.abs(pi - 0.5), kind="stable")[:3].tolist())
        g = stats.apply(test).graphs[0]
        mine = {g.index_of[r["node"]] for r in rank_persuadable_nodes(P, g, 3)}
        overlaps.append(len(truth & mine))
    return overlaps


def test_persuadable_ranking_beats_chance(persuadability_overlaps):
    # a random top-3 out of 30 shares 0.3 nodes with the truth on average
    assert np.mean(persuadability_overlaps) > 0.3


@pytest.mark.xfail(strict=True, reason="near-tied planted probabilities: top-3 order is dominated by "
                                       "estimation error even at the Bayes loss")
def test_persuadable_ranking_matches_sidecar_top3(persuadability_overlaps):
    assert all(k >= 2 for k in persuadability_overlaps)
