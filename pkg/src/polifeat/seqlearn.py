"""Sequence models: pooled least-squares AR baseline and a causal Elman RNN.

RNN recurrence (``a_{-1} = 0``)::

    a_t     = tanh(W_x x_t + W_a a_{t-1} + b_a)
    yhat_t  = sigmoid(w_y a_t + b_y)      (binary outcomes) or w_y a_t + b_y (real)
    xnext_t = sigmoid(W_g a_t + b_g)      (per-actor presence probability at t+1)
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.special import expit

from .core import EventSequence, NumericFailure, PolifeatError, SequenceDataset, ShapeError

EPS_CLIP = 1e-7
PIVOT_TOL = 1e-12
RNN_FIELDS = ("W_x", "W_a", "b_a", "w_y", "b_y", "W_g", "b_g")


class RankError(PolifeatError, np.linalg.LinAlgError):
    pass


# Autoregressive baseline ------------------------------------------------

@dataclass(frozen=True)
class ArParams:
    order: int
    coefficients: tuple[float, ...]   # lag 1 first
    intercept: float

    def predict_next(self, history) -> float:
        h = np.asarray(history, dtype=np.float64)[-self.order:][::-1]
        return float(self.intercept + np.dot(self.coefficients, h))

    def flat(self) -> np.ndarray:
        return np.array([self.intercept, *self.coefficients])

    @classmethod
    def from_flat(cls, flat) -> "ArParams":
        flat = np.asarray(flat, dtype=np.float64)
        return cls(len(flat) - 1, tuple(flat[1:].tolist()), float(flat[0]))


def _outcomes(seq) -> np.ndarray:
    if isinstance(seq, EventSequence):
        if seq.q != 1:
            raise ShapeError(f"AR fitting needs q = 1, got q = {seq.q}")
        return seq.Y[:, 0]
    return np.asarray(seq, dtype=np.float64).ravel()


def fit_ar(sequences: Sequence, order: int) -> ArParams:
    """Least squares of y_t on (1, y_{t-1}, ..., y_{t-order}), pooled over sequences.

    Solved by column-pivoted QR; a column whose pivot is below
    ``PIVOT_TOL`` (relative to the largest) is rank deficient.  A deficient
    but consistent system (e.g. a constant series) gets the minimum-norm
    solution; a deficient inconsistent one raises :class:`RankError`.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    rows, targets = [], []
    for s in sequences:
        y = _outcomes(s)
        if len(y) <= order:
            raise ShapeError(f"sequence of length {len(y)} is too short for order {order}")
        if not np.isfinite(y).all():
            raise ShapeError("AR fitting needs every step labeled")
        for t in range(order, len(y)):
            rows.append(np.concatenate([[1.0], y[t - order:t][::-1]]))
            targets.append(y[t])
    D, y = np.array(rows), np.array(targets)
    _, R, _ = scipy.linalg.qr(D, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > PIVOT_TOL * diag[0])) if diag.size and diag[0] > 0 else 0
    beta, *_ = np.linalg.lstsq(D, y, rcond=PIVOT_TOL)
    if rank < D.shape[1]:
        resid = D @ beta - y
        if np.max(np.abs(resid)) > 1e-9 * max(1.0, np.max(np.abs(y))):
            raise RankError(f"design matrix has rank {rank} < {D.shape[1]} columns "
                            f"(intercept + {order} lags) and the fit is not exact")
    return ArParams(order, tuple(beta[1:].tolist()), float(beta[0]))


# RNN --------------------------------------------------------------------

@dataclass(eq=False)
class RnnParams:
    W_x: np.ndarray   # (h, d)
    W_a: np.ndarray   # (h, h)
    b_a: np.ndarray   # (h,)
    w_y: np.ndarray   # (q, h)
    b_y: np.ndarray   # (q,)
    W_g: np.ndarray   # (d, h)
    b_g: np.ndarray   # (d,)
    binary_y: bool = True

    @property
    def h(self) -> int:
        return self.W_a.shape[0]

    @property
    def d(self) -> int:
        return self.W_x.shape[1]

    @property
    def q(self) -> int:
        return self.w_y.shape[0]

    def flat(self) -> np.ndarray:
        return np.concatenate([getattr(self, f).ravel() for f in RNN_FIELDS])

    def from_vector(self, vec) -> "RnnParams":
        vec = np.asarray(vec, dtype=np.float64)
        out, pos = {}, 0
        for f in RNN_FIELDS:
            t = getattr(self, f)
            out[f] = vec[pos:pos + t.size].reshape(t.shape).copy()
            pos += t.size
        if pos != vec.size:
            raise ShapeError(f"flat vector has {vec.size} entries, expected {pos}")
        return replace(self, **out)

    def zeros_like(self) -> "RnnParams":
        return self.from_vector(np.zeros(self.flat().size))

    def checkpoint_dims(self) -> dict:
        return {"d": self.d, "q": self.q, "h": self.h, "binary_y": self.binary_y}

    @classmethod
    def zeros(cls, d: int, q: int, h: int, binary_y: bool = True) -> "RnnParams":
        z = np.zeros
        return cls(z((h, d)), z((h, h)), z(h), z((q, h)), z(q), z((d, h)), z(d), binary_y)

    @classmethod
    def from_checkpoint(cls, dims: dict, flat) -> "RnnParams":
        return cls.zeros(int(dims["d"]), int(dims["q"]), int(dims["h"]), bool(dims["binary_y"])).from_vector(flat)

    def __eq__(self, other):
        return (isinstance(other, RnnParams) and self.binary_y == other.binary_y
                and all(getattr(self, f).shape == getattr(other, f).shape
                        and np.array_equal(getattr(self, f), getattr(other, f)) for f in RNN_FIELDS))

    __hash__ = object.__hash__


def init_rnn(d: int, q: int, h: int = 8, seed: int = 0, binary_y: bool = True) -> RnnParams:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 10]))

    def glorot(shape, fan_in, fan_out):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-s, s, shape)

    P = RnnParams.zeros(d, q, h, binary_y)
    P.W_x = glorot((h, d), d, h)
    P.W_a = glorot((h, h), h, h)
    P.w_y = glorot((q, h), h, q)
    P.W_g = glorot((d, h), h, d)
    return P


def _step(params: RnnParams, a_prev: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.tanh(params.W_x @ x + params.W_a @ a_prev + params.b_a)


def _outcome(params: RnnParams, a: np.ndarray) -> np.ndarray:
    o = params.w_y @ a + params.b_y
    return expit(o) if params.binary_y else o


def forward_rnn(params: RnnParams, seq: EventSequence, a0: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Predicted outcomes (T, q) and latent states (T, h).

    Step t reads only x_0..x_t, so later inputs never change earlier outputs.
    """
    if seq.d != params.d:
        raise ShapeError(f"sequence has d={seq.d}, model expects d={params.d}")
    T = len(seq)
    A = np.zeros((T, params.h))
    Yhat = np.zeros((T, params.q))
    a = np.zeros(params.h) if a0 is None else np.asarray(a0, dtype=np.float64)
    for t in range(T):
        a = _step(params, a, seq.X[t])
        A[t] = a
        Yhat[t] = _outcome(params, a)
    return Yhat, A


@dataclass(frozen=True)
class RnnTrainConfig:
    """``supervision``: "every" scores every labeled step, "final" only the
    last step of each sequence.  ``gen_weight`` weights the next-event loss
    that trains the generation head (0 disables it)."""

    lr: float = 0.1
    epochs: int = 200
    seed: int = 0
    supervision: str = "every"
    gen_weight: float = 1.0

    def validate(self):
        if not self.lr >= 0 or self.epochs < 1:
            raise ValueError(f"need lr >= 0 and epochs >= 1, got lr={self.lr}, epochs={self.epochs}")
        if self.supervision not in ("every", "final"):
            raise ValueError(f"supervision must be 'every' or 'final', got {self.supervision!r}")


def _bce(p, y):
    pc = np.clip(p, EPS_CLIP, 1 - EPS_CLIP)
    return -(y * np.log(pc) + (1 - y) * np.log(1 - pc)), np.where(p == pc, p - y, 0.0)


def _outcome_mask(seq: EventSequence, supervision: str) -> np.ndarray:
    lab = np.isfinite(seq.Y).all(axis=1)
    if supervision == "final":
        last = np.zeros_like(lab)
        if len(lab):
            last[-1] = lab[-1]
        return last
    return lab


def rnn_loss_and_gradients(params: RnnParams, sequences: Sequence[EventSequence],
                           supervision: str = "every", gen_weight: float = 1.0) -> tuple[float, RnnParams]:
    """Mean outcome loss plus ``gen_weight`` times the mean next-event
    cross-entropy, with exact gradients by backpropagation through time."""
    n_out = sum(int(_outcome_mask(s, supervision).sum()) * params.q for s in sequences)
    n_gen = sum(max(len(s) - 1, 0) * params.d for s in sequences) if gen_weight else 0
    if n_out == 0 and n_gen == 0:
        raise ShapeError("nothing to supervise: no labeled steps and no next-event targets")
    G = params.zeros_like()
    total = 0.0
    for seq in sequences:
        _, A = forward_rnn(params, seq)
        T = len(seq)
        mask = _outcome_mask(seq, supervision)
        dA = np.zeros_like(A)
        if n_out:
            o = A @ params.w_y.T + params.b_y
            if params.binary_y:
                l, d = _bce(expit(o), np.nan_to_num(seq.Y))
            else:
                diff = o - np.nan_to_num(seq.Y)
                l, d = diff ** 2, 2 * diff
            l, d = l * mask[:, None], d * mask[:, None] / n_out
            total += l.sum() / n_out
            G.w_y += d.T @ A
            G.b_y += d.sum(axis=0)
            dA += d @ params.w_y
        if n_gen and T > 1:
            og = A[:-1] @ params.W_g.T + params.b_g
            l, d = _bce(expit(og), seq.X[1:])
            total += gen_weight * l.sum() / n_gen
            d = gen_weight * d / n_gen
            G.W_g += d.T @ A[:-1]
            G.b_g += d.sum(axis=0)
            dA[:-1] += d @ params.W_g
        da_next = np.zeros(params.h)
        for t in reversed(range(T)):
            da = dA[t] + da_next
            dz = da * (1 - A[t] ** 2)
            a_prev = A[t - 1] if t > 0 else np.zeros(params.h)
            G.W_x += np.outer(dz, seq.X[t])
            G.W_a += np.outer(dz, a_prev)
            G.b_a += dz
            da_next = params.W_a.T @ dz
    return float(total), G


def train_rnn(params: RnnParams, train: SequenceDataset | Sequence[EventSequence],
              val: SequenceDataset | Sequence[EventSequence] | None,
              cfg: RnnTrainConfig) -> tuple[RnnParams, list[dict]]:
    """Full-batch gradient descent with full-sequence BPTT."""
    cfg.validate()
    seqs = list(train.sequences if isinstance(train, SequenceDataset) else train)
    if not seqs:
        raise ShapeError("no training sequences")
    val_seqs = None if val is None else list(val.sequences if isinstance(val, SequenceDataset) else val)
    history = []
    theta = params.flat()
    P = params
    for epoch in range(cfg.epochs):
        loss, G = rnn_loss_and_gradients(P, seqs, cfg.supervision, cfg.gen_weight)
        if not np.isfinite(loss):
            raise NumericFailure(f"RNN training diverged: loss is {loss} at epoch {epoch}")
        row = {"epoch": epoch, "loss": loss}
        if val_seqs:
            row["val_loss"] = rnn_loss_and_gradients(P, val_seqs, cfg.supervision, cfg.gen_weight)[0]
        history.append(row)
        if cfg.lr:
            theta = theta - cfg.lr * G.flat()
            P = params.from_vector(theta)
    return P, history


def generate_events(params: RnnParams, prefix: EventSequence, horizon: int, seed: int | None = None,
                    greedy: bool = False) -> EventSequence:
    """Extend ``prefix`` by ``horizon`` model-generated events.

    Each new bit is drawn from Bernoulli(sigmoid(W_g a_t + b_g)) (or set when
    that probability exceeds 0.5 in greedy mode); the recurrence then
    advances on the new event and its predicted outcome is attached.  New
    timestamps continue the prefix spacing (unit steps when it is shorter
    than two events).
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    _, A = forward_rnn(params, prefix)
    a = A[-1] if len(prefix) else np.zeros(params.h)
    rng = None if greedy else np.random.default_rng(np.random.SeedSequence([int(seed or 0), 11]))
    step = float(prefix.t[-1] - prefix.t[-2]) if len(prefix) > 1 else 1.0
    t_last = float(prefix.t[-1]) if len(prefix) else -step
    ts, xs, ys = [], [], []
    for k in range(horizon):
        prob = expit(params.W_g @ a + params.b_g)
        x = (prob > 0.5).astype(np.float64) if greedy else (rng.random(params.d) < prob).astype(np.float64)
        a = _step(params, a, x)
        ts.append(t_last + step * (k + 1))
        xs.append(x)
        ys.append(_outcome(params, a))
    return EventSequence(np.concatenate([prefix.t, ts]), np.vstack([prefix.X, xs]),
                         np.vstack([prefix.Y.reshape(len(prefix), params.q), ys]), prefix.binary_x,
                         np.concatenate([prefix.generated, np.ones(horizon, dtype=bool)]))
