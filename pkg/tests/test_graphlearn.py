import itertools
import math

import numpy as np
import pytest

from polifeat.core import Dims, GraphDataset, NumericFailure, PoliticalGraph, ShapeError
from polifeat.graphlearn import (
    EPS_CLIP,
    TaskError,
    TrainConfig,
    evaluate,
    extract_substructure,
    forward_graph,
    init_model,
    loss_and_gradients,
    param_count,
    permutation_importance,
    score_link,
    train,
)
from helpers import path_graph, random_dataset, random_graph, random_model
from oracles import finite_difference, gnn_forward_loops, max_relative_error


def scalar_model(**vals):
    P = init_model(Dims(1, 1, 1), L=1, h=1).zeros_like()
    for k, v in vals.items():
        getattr(P, k)[...] = v
    return P


def test_path_graph_by_hand():
    P = scalar_model(W_in=0.5, b_in=0.1, W_self=0.8, W_nbr=-0.6, u=1.2, c=-0.3, b=0.05,
                     w_out=1.5, b_out=-0.2, w_node=0.7, b_node=0.1)
    out = forward_graph(P, path_graph())
    h0 = 0.6
    gate = 1 / (1 + math.exp(-0.9))
    h_root = math.tanh(0.8 * h0 + 0.05)
    h_inner = math.tanh(0.8 * h0 + gate * (-0.6 * h0) + 0.05)
    z = (h_root + 2 * h_inner) / 3
    assert abs(out.graph[0] - 1 / (1 + math.exp(-(1.5 * z - 0.2)))) < 1e-12
    for got, h in zip(out.nodes, (h_root, h_inner, h_inner)):
        assert abs(got - 1 / (1 + math.exp(-(0.7 * h + 0.1)))) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_forward_matches_loop_oracle(seed):
    ds = random_dataset(seed, K=1, n=6, m=3, p=2, kinds=("binary", "real"))
    P = random_model(ds, seed, L=2, h=4)
    out = forward_graph(P, ds.graphs[0])
    graph, nodes, H = gnn_forward_loops(P, ds.graphs[0])
    assert np.allclose(out.graph, graph, rtol=0, atol=1e-12)
    assert np.allclose(out.nodes, nodes, rtol=0, atol=1e-12)
    assert np.allclose(out.H, H, rtol=0, atol=1e-12)


def test_zero_params_give_half():
    P = init_model(Dims(2, 2, 1), L=2, h=3).zeros_like()
    g = random_graph(np.random.default_rng(0), 5)
    out = forward_graph(P, g)
    assert np.all(out.graph == 0.5) and np.all(out.nodes == 0.5)
    assert score_link(P, g, 0, 1) == 0.5


def test_zero_edge_graph_ignores_neighbour_weights():
    g = random_graph(np.random.default_rng(1), 4, edge_prob=0.0)
    P = random_model(GraphDataset((g,), Dims(2, 2, 1)), seed=1)
    Q = P.copy()
    Q.W_nbr[...] = 0
    a, b = forward_graph(P, g), forward_graph(Q, g)
    assert np.array_equal(a.graph, b.graph) and np.array_equal(a.nodes, b.nodes)


def test_score_link_identity_case():
    # tanh never reaches 1 exactly, so saturate one coordinate and compare
    # against the bilinear form on the embeddings actually produced
    P = init_model(Dims(1, 1, 1), L=1, h=2).zeros_like()
    P.B[...] = np.eye(2)
    P.W_self[0] = np.eye(2) * 50.0
    P.b_in[...] = [1.0, 0.0]
    g = PoliticalGraph(0, [0, 1], [[0.0], [0.0]], [], [], np.zeros((0, 1)), [0.0])
    H = forward_graph(P, g).H
    assert H[0].tolist() == [1.0, 0.0] == H[1].tolist()
    assert score_link(P, g, 0, 1) == pytest.approx(0.7310586, abs=1e-7)
    P.B[...] = 0.0
    assert score_link(P, g, 0, 1) == 0.5 == score_link(P, g, 1, 0)
    with pytest.raises(ValueError):
        score_link(P, g, 1, 1)


def test_link_score_is_directed():
    ds = random_dataset(3, K=1, n=5)
    P = random_model(ds, 3)
    g = ds.graphs[0]
    assert score_link(P, g, 0, 1) != score_link(P, g, 1, 0)


def _fd_check(P, graphs, task, **kw):
    loss, grads = loss_and_gradients(P, graphs, task, **kw)

    def f(theta):
        return loss_and_gradients(P.from_vector(theta), graphs, task, **kw)[0]

    numeric = finite_difference(f, P.flat(), 1e-5)
    return max_relative_error(grads.flat(), numeric, floor=1e-5)


def micro_gradient_error(seed):
    task = ("graph_label", "node_label", "link")[seed % 3]
    kinds = ("binary", "real") if seed % 2 else ("binary",)
    ds = random_dataset(seed, K=2, n=4, m=2, p=2, kinds=kinds, edge_prob=0.5)
    P = random_model(ds, seed, L=2, h=3)
    return _fd_check(P, ds.graphs, task, seed=seed)


@pytest.mark.parametrize("seed", range(20))
def test_gradients_match_finite_differences(seed):
    assert micro_gradient_error(seed) < 1e-4


def test_balanced_zero_param_loss_is_ln2():
    ds = random_dataset(0, K=4, n=3)
    graphs = [g.replace(label=[float(k % 2)]) for k, g in enumerate(ds.graphs)]
    P = init_model(ds.dims, 2, 3).zeros_like()
    loss, _ = loss_and_gradients(P, graphs, "graph_label")
    assert abs(loss - math.log(2)) < 1e-12


def test_clipped_perfect_fit_loss_floor():
    P = scalar_model(b_out=1000.0)
    g = path_graph()
    loss, grads = loss_and_gradients(P, [g], "graph_label")
    assert 0 < loss <= -math.log(1 - EPS_CLIP) + 1e-15
    assert np.isfinite(grads.flat()).all()
    P.b_out[...] = -1000.0
    loss, _ = loss_and_gradients(P, [g], "graph_label")
    assert loss == pytest.approx(-math.log(EPS_CLIP))


def test_task_errors():
    ds = random_dataset(0)
    P = random_model(ds)
    with pytest.raises(TaskError):
        loss_and_gradients(P, ds.graphs, "regression")
    with pytest.raises(TaskError):
        loss_and_gradients(P, [ds.graphs[0].replace(label=[0.3])], "graph_label")
    with pytest.raises(ShapeError):
        forward_graph(init_model(Dims(3, 2, 1)), ds.graphs[0])


def test_zero_learning_rate_keeps_params():
    ds = random_dataset(1, K=3)
    P = random_model(ds, 1)
    Q, hist = train(P, ds, None, TrainConfig(lr=0.0, epochs=5))
    assert Q == P and len(hist) == 5


def test_overfits_single_graph():
    ds = random_dataset(2, K=1, n=5)
    P = init_model(ds.dims, 2, 8, seed=2)
    _, hist = train(P, ds, None, TrainConfig(lr=0.5, epochs=500))
    assert hist[-1]["loss"] < 0.1 * math.log(2)


def test_training_is_deterministic():
    ds = random_dataset(4, K=6, n=5)
    runs = [train(init_model(ds.dims, 2, 4, seed=9), ds, ds, TrainConfig(lr=0.2, epochs=20, task="link", seed=3))
            for _ in range(2)]
    assert runs[0][0] == runs[1][0]
    assert [r["loss"] for r in runs[0][1]] == [r["loss"] for r in runs[1][1]]


def test_divergence_raises_numeric_failure():
    ds = random_dataset(5, K=3, kinds=("real",))
    P = random_model(ds, 5)
    with np.errstate(all="ignore"), pytest.raises(NumericFailure, match="epoch"):
        train(P, ds, None, TrainConfig(lr=1e9, epochs=50))


def test_evaluate_single_class_auc_absent():
    ds = random_dataset(6, K=3)
    graphs = [g.replace(label=[1.0]) for g in ds.graphs]
    res = evaluate(random_model(ds, 6), graphs, "graph_label")
    assert res["auc"] is None and 0 <= res["accuracy"] <= 1


def test_importance_of_constant_and_ignored_columns():
    ds = random_dataset(7, K=6, n=5, m=3, p=2)
    graphs = [g.replace(X=np.column_stack([g.X[:, :2], np.full(g.n, 4.0)])) for g in ds.graphs]
    ds = ds.with_graphs(graphs)
    P = random_model(ds, 7)
    P.W_in[:, 1] = 0.0
    P.u[:, 0] = 0.0
    rows = permutation_importance(P, ds, "node_label", repeats=3, seed=1)
    assert len(rows) == 5
    assert rows[2]["importance"] == 0.0 and rows[2]["std"] == 0.0
    assert abs(rows[1]["importance"]) < 1e-12
    assert abs(rows[3]["importance"]) < 1e-12


def test_substructure_budget_extremes():
    ds = random_dataset(8, K=1, n=5, edge_prob=0.4)
    g, P = ds.graphs[0], random_model(ds, 8)
    full = forward_graph(P, g).graph[0]
    cls = int(full >= 0.5)
    edges, prob = extract_substructure(P, g, g.num_edges)
    assert sorted(edges) == sorted(zip(g.src.tolist(), g.dst.tolist()))
    assert prob == pytest.approx(full if cls else 1 - full, abs=1e-15)
    edges, prob = extract_substructure(P, g, 0)
    bare = forward_graph(P, g.with_edges([], [], np.zeros((0, 2)))).graph[0]
    assert edges == [] and prob == pytest.approx(bare if cls else 1 - bare, abs=1e-15)


@pytest.mark.parametrize("seed", range(6))
def test_substructure_between_exhaustive_bounds(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 4, edge_prob=0.4)
    while not 3 <= g.num_edges <= 6:
        g = random_graph(rng, 4, edge_prob=0.4)
    P = random_model(GraphDataset((g,), Dims(2, 2, 1)), seed)
    _, prob = extract_substructure(P, g, 2, target_class=1)
    values = []
    for keep in itertools.combinations(range(g.num_edges), 2):
        k = list(keep)
        values.append(forward_graph(P, g.with_edges(g.src[k], g.dst[k], g.A[k])).graph[0])
    assert min(values) - 1e-15 <= prob <= max(values) + 1e-15


def test_permutation_invariance():
    ds = random_dataset(9, K=1, n=6)
    g = ds.graphs[0]
    P = random_model(ds, 9)
    perm = np.random.default_rng(0).permutation(g.n)
    relabel = {int(v): int(100 + perm[k]) for k, v in enumerate(g.node_ids)}
    order = np.argsort(perm)
    h = PoliticalGraph(0, [relabel[int(v)] for v in g.node_ids[order]], g.X[order],
                       [relabel[int(s)] for s in g.src], [relabel[int(d)] for d in g.dst], g.A, g.label,
                       g.node_labels[order])
    a, b = forward_graph(P, g), forward_graph(P, h)
    assert np.allclose(a.graph, b.graph, atol=1e-9, rtol=0)
    assert np.allclose(a.nodes[order], b.nodes, atol=1e-9, rtol=0)
    assert abs(score_link(P, g, 0, 1) - score_link(P, h, relabel[0], relabel[1])) < 1e-9


def test_init_bounds_determinism_and_count():
    dims = Dims(5, 4, 2)
    P = init_model(dims, 2, 16, seed=3)
    assert P == init_model(dims, 2, 16, seed=3)
    bound = lambda fi, fo: math.sqrt(6 / (fi + fo))
    assert np.abs(P.W_in).max() <= bound(5, 16)
    assert np.abs(P.W_self).max() <= bound(16, 16) and np.abs(P.B).max() <= bound(16, 16)
    assert np.abs(P.u).max() <= bound(4, 1) and np.abs(P.w_out).max() <= bound(16, 2)
    assert not P.b_in.any() and not P.b.any() and not P.c.any()
    assert P.size == param_count(5, 4, 2, 2, 16)
    # h = 1, m = 1, p = 1, M = 1, L = 1: W_in, b_in, W_self, W_nbr, u, c, b, w_out, b_out, w_node, b_node, B
    assert param_count(1, 1, 1, 1, 1) == 12 == init_model(Dims(1, 1, 1), 1, 1).size


def test_input_is_not_modified():
    ds = random_dataset(10, K=1)
    g = ds.graphs[0]
    before = (g.X.copy(), g.A.copy())
    forward_graph(random_model(ds, 10), g)
    assert np.array_equal(g.X, before[0]) and np.array_equal(g.A, before[1])
