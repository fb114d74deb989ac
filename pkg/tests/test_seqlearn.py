import math

import numpy as np
import pytest

from polifeat.core import EventSequence, NumericFailure, ShapeError
from polifeat.seqlearn import (
    RankError,
    RnnTrainConfig,
    fit_ar,
    forward_rnn,
    generate_events,
    init_rnn,
    rnn_loss_and_gradients,
    train_rnn,
)
from oracles import finite_difference, max_relative_error, sigmoid


def seq_from(y, d=1):
    T = len(y)
    return EventSequence(np.arange(T, dtype=float), np.zeros((T, d)), np.asarray(y, float).reshape(T, 1))


def random_seq(rng, T, d, q=1, binary_y=True, label_prob=1.0):
    X = (rng.random((T, d)) < 0.5).astype(float)
    Y = (rng.random((T, q)) < 0.5).astype(float) if binary_y else rng.normal(size=(T, q))
    Y[rng.random(T) > label_prob] = np.nan
    return EventSequence(np.arange(T, dtype=float), X, Y)


def test_ar_noiseless_recovery():
    y = [1.0]
    for _ in range(30):
        y.append(0.5 * y[-1])
    ar = fit_ar([seq_from(y)], 1)
    assert abs(ar.coefficients[0] - 0.5) < 1e-9 and abs(ar.intercept) < 1e-9


def test_ar_constant_sequence():
    ar = fit_ar([seq_from([3.0] * 10)], 1)
    assert abs(ar.predict_next([3.0]) - 3.0) < 1e-9


def test_ar2_with_noise():
    rng = np.random.default_rng(0)
    y = np.zeros(10_000)
    for t in range(2, len(y)):
        y[t] = 0.6 * y[t - 1] - 0.2 * y[t - 2] + rng.normal(scale=1e-2)
    ar = fit_ar([y], 2)
    assert np.allclose(ar.coefficients, (0.6, -0.2), atol=0.02)


def test_ar_rank_deficiency_and_short_input():
    # both lag columns are zero wherever a target exists, so only the intercept
    # is identified, and targets 1 and 2 cannot share it
    with pytest.raises(RankError, match="rank 1 < 3"):
        fit_ar([[0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 0.0, 2.0]], 2)
    with pytest.raises(ShapeError):
        fit_ar([[0.0, 1.0]], 2)


def test_ar_pools_sequences():
    a = [1.0, 0.5, 0.25, 0.125]
    b = [4.0, 2.0, 1.0]
    ar = fit_ar([a, b], 1)
    assert abs(ar.coefficients[0] - 0.5) < 1e-12 and abs(ar.intercept) < 1e-12


def test_zero_params_give_half():
    s = random_seq(np.random.default_rng(0), 6, 3)
    yhat, A = forward_rnn(init_rnn(3, 1, 4).zeros_like(), s)
    assert np.all(yhat == 0.5) and not A.any()


def test_length_two_by_hand():
    P = init_rnn(1, 1, 1).zeros_like()
    P.W_x[...], P.W_a[...], P.b_a[...], P.w_y[...], P.b_y[...] = 0.5, -1.0, 0.2, 2.0, -0.5
    s = EventSequence([0.0, 1.0], [[1.0], [0.0]], [[1.0], [0.0]])
    yhat, A = forward_rnn(P, s)
    a0 = math.tanh(0.7)
    a1 = math.tanh(-a0 + 0.2)
    assert abs(A[0, 0] - a0) < 1e-12 and abs(A[1, 0] - a1) < 1e-12
    assert abs(yhat[0, 0] - sigmoid(2 * a0 - 0.5)) < 1e-12
    assert abs(yhat[1, 0] - sigmoid(2 * a1 - 0.5)) < 1e-12
    P.binary_y = False
    yhat, _ = forward_rnn(P, s)
    assert abs(yhat[1, 0] - (2 * a1 - 0.5)) < 1e-12


def test_future_inputs_do_not_leak():
    rng = np.random.default_rng(1)
    P = init_rnn(4, 1, 5, seed=1)
    s = random_seq(rng, 8, 4)
    base_y, base_a = forward_rnn(P, s)
    for t in range(7):
        X = s.X.copy()
        X[t + 1:] = 1 - X[t + 1:]
        y, a = forward_rnn(P, EventSequence(s.t, X, s.Y))
        assert np.array_equal(y[:t + 1], base_y[:t + 1]) and np.array_equal(a[:t + 1], base_a[:t + 1])


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        forward_rnn(init_rnn(3, 1, 2), random_seq(np.random.default_rng(0), 3, 2))


def micro_gradient_error(seed):
    rng = np.random.default_rng(seed)
    d, h, binary = 1 + seed % 3, 1 + (seed // 3) % 3, seed % 4 != 3
    seqs = [random_seq(rng, int(rng.integers(1, 6)), d, binary_y=binary, label_prob=0.8) for _ in range(2)]
    if not any(np.isfinite(s.Y).any() for s in seqs):
        seqs[0] = random_seq(rng, 3, d, binary_y=binary)
    P = init_rnn(d, 1, h, seed=seed, binary_y=binary)
    P = P.from_vector(P.flat() + rng.normal(scale=0.3, size=P.flat().size))
    supervision = "final" if seed % 5 == 4 else "every"
    _, G = rnn_loss_and_gradients(P, seqs, supervision)
    numeric = finite_difference(lambda th: rnn_loss_and_gradients(P.from_vector(th), seqs, supervision)[0],
                                P.flat(), 1e-5)
    return max_relative_error(G.flat(), numeric, floor=1e-5)


@pytest.mark.parametrize("seed", range(20))
def test_gradients_match_finite_differences(seed):
    assert micro_gradient_error(seed) < 1e-4


def test_zero_learning_rate_and_determinism():
    rng = np.random.default_rng(2)
    seqs = [random_seq(rng, 5, 3) for _ in range(3)]
    P = init_rnn(3, 1, 4, seed=2)
    Q, hist = train_rnn(P, seqs, None, RnnTrainConfig(lr=0.0, epochs=3))
    assert Q == P and len(hist) == 3
    a = train_rnn(P, seqs, seqs, RnnTrainConfig(lr=0.3, epochs=10))
    b = train_rnn(P, seqs, seqs, RnnTrainConfig(lr=0.3, epochs=10))
    assert a[0] == b[0] and a[1] == b[1]


def test_overfits_short_sequence():
    s = EventSequence(np.arange(6.0), [[1, 0], [0, 1], [1, 1], [0, 0], [1, 0], [0, 1]],
                      [[1.0], [0.0], [1.0], [0.0], [1.0], [0.0]])
    P, hist = train_rnn(init_rnn(2, 1, 6, seed=0), [s], None, RnnTrainConfig(lr=1.0, epochs=1000, gen_weight=0.0))
    assert hist[-1]["loss"] < 0.1 * math.log(2)


def test_divergence_is_numeric_failure():
    rng = np.random.default_rng(3)
    seqs = [random_seq(rng, 5, 2, binary_y=False)]
    P = init_rnn(2, 1, 3, binary_y=False)
    with np.errstate(all="ignore"), pytest.raises(NumericFailure, match="epoch"):
        train_rnn(P, seqs, None, RnnTrainConfig(lr=1e12, epochs=20))


def test_generation_degenerate_logits():
    P = init_rnn(3, 1, 2, seed=0)
    P.W_g[...] = 0.0
    P.b_g[...] = -30.0
    prefix = random_seq(np.random.default_rng(0), 4, 3)
    out = generate_events(P, prefix, 5, seed=1)
    assert len(out) == 9 and not out.X[4:].any()
    assert out.generated.tolist() == [False] * 4 + [True] * 5
    assert np.array_equal(out.X[:4], prefix.X)
    assert out.t[4:].tolist() == [4.0, 5.0, 6.0, 7.0, 8.0]


def test_greedy_generation_is_deterministic():
    P = init_rnn(4, 1, 3, seed=5)
    prefix = random_seq(np.random.default_rng(5), 3, 4)
    assert generate_events(P, prefix, 6, greedy=True) == generate_events(P, prefix, 6, greedy=True)


def test_sampled_generation_frequency():
    P = init_rnn(2, 1, 2, seed=0)
    P.W_g[...] = 0.0
    P.b_g[...] = 0.0
    empty = EventSequence.empty(2, 1)
    bits = np.array([generate_events(P, empty, 1, seed=s).X[0] for s in range(1000)])
    assert np.all(np.abs(bits.mean(axis=0) - 0.5) < 0.05)


def test_generated_outcomes_follow_recurrence():
    P = init_rnn(3, 1, 4, seed=7)
    prefix = random_seq(np.random.default_rng(7), 3, 3)
    out = generate_events(P, prefix, 4, seed=2)
    yhat, _ = forward_rnn(P, EventSequence(out.t, out.X, out.Y))
    assert np.allclose(out.Y[3:], yhat[3:], atol=0, rtol=0)
