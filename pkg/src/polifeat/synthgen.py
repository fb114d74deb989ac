"""Seed-deterministic generators with planted, recorded mechanisms.

Randomness comes from numpy's PCG64 seeded through ``SeedSequence`` with an
entropy tuple ``(seed, stream, index)``: graph ``k`` of a dataset, sequence
``k`` of a batch and a Hawkes run each own an independent stream, so outputs
do not depend on generation order or on how many items are requested.

Draw order per graph: party (n), seniority (n), z1 (n), z2 (n), edge
uniforms (n*n, row-major), frequencies (n*n), relationship types (n*n),
bill lean (1), vote uniforms (n).
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

from .core import (
    ConfigError,
    Dims,
    EventSequence,
    GraphDataset,
    MarkedPointProcess,
    PoliticalGraph,
    SequenceDataset,
    require,
    validate_dataset,
)

log = logging.getLogger(__name__)

STREAM_GRAPH, STREAM_SEQUENCE, STREAM_HAWKES = 1, 2, 3
N_REL_TYPES = 3
NODE_FEATURES = ("party", "seniority", "z1", "z2")
LEAN_FEATURE = "bill_lean"
EDGE_FEATURES = ("freq", "rel_0", "rel_1", "rel_2")


def rng_for(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), stream, int(index)])))


@dataclass(frozen=True)
class GraphGenConfig:
    """``expose_lean`` appends the bill lean as a fifth node feature.

    Without it the vote mechanism is sign-symmetric in the (uniform, zero
    mean) lean, so no observable feature carries information about votes or
    passage; set it to False for the bare four-feature layout.
    """

    n: int = 30
    q_in: float = 0.3
    q_out: float = 0.05
    w_p: float = 3.0
    w_c: float = 1.0
    K: int = 100
    expose_lean: bool = True

    def validate(self):
        if self.n < 2:
            raise ConfigError(f"n={self.n}: need at least 2 nodes")
        if not 0 <= self.q_out <= self.q_in <= 1:
            raise ConfigError(f"need 0 <= q_out <= q_in <= 1, got q_in={self.q_in}, q_out={self.q_out}")
        if self.K < 0:
            raise ConfigError(f"K={self.K} must be non-negative")
        if not (np.isfinite(self.w_p) and np.isfinite(self.w_c)):
            raise ConfigError("mechanism weights must be finite")

    @property
    def dims(self) -> Dims:
        return Dims(len(NODE_FEATURES) + int(self.expose_lean), len(EDGE_FEATURES), 2, ("binary", "real"))


@dataclass(frozen=True)
class SeqGenConfig:
    d: int = 8
    T: int = 50
    stay_prob: float = 0.8
    init_prob: float = 0.3
    decay: float = 0.9

    def validate(self):
        if self.d < 1 or self.T < 0:
            raise ConfigError(f"need d >= 1 and T >= 0, got d={self.d}, T={self.T}")
        for name in ("stay_prob", "init_prob"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ConfigError(f"{name}={v} outside [0, 1]")
        if not 0 <= self.decay < 1:
            raise ConfigError(f"decay={self.decay} outside [0, 1)")


@dataclass(frozen=True, eq=False)
class HawkesParams:
    """Exponential-kernel multivariate Hawkes parameters.

    ``W[v, u]`` scales the kernel ``beta * exp(-beta * dt)`` by which an event
    at node v excites node u.
    """

    mu: np.ndarray
    W: np.ndarray
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "mu", np.array(self.mu, dtype=np.float64).ravel())
        W = np.array(self.W, dtype=np.float64)
        object.__setattr__(self, "W", W.reshape(len(self.mu), len(self.mu)))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def n(self) -> int:
        return len(self.mu)

    def validate(self):
        if self.n < 1:
            raise ConfigError("Hawkes process needs at least one node")
        if not (np.all(np.isfinite(self.mu)) and np.all(self.mu > 0)):
            raise ConfigError("base rates mu must be finite and positive")
        if not (np.all(np.isfinite(self.W)) and np.all(self.W >= 0)):
            raise ConfigError("influence matrix W must be finite and non-negative")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ConfigError(f"kernel decay beta={self.beta} must be positive")

    def max_row_ratio(self) -> float:
        return float(self.W.sum(axis=1).max() / self.beta)

    def is_supercritical(self) -> bool:
        return self.max_row_ratio() >= 1.0

    def flat(self) -> np.ndarray:
        return np.concatenate([self.mu, self.W.ravel(), [self.beta]])

    @classmethod
    def from_flat(cls, flat, n: int) -> "HawkesParams":
        flat = np.asarray(flat, dtype=np.float64)
        return cls(flat[:n], flat[n:n + n * n].reshape(n, n), flat[n + n * n])

    def __eq__(self, other):
        return (isinstance(other, HawkesParams) and self.beta == other.beta
                and np.array_equal(self.mu, other.mu) and np.array_equal(self.W, other.W))

    __hash__ = object.__hash__


# Graphs -----------------------------------------------------------------

def vote_probabilities(party, src_idx, dst_idx, freq, lean, w_p, w_c) -> np.ndarray:
    """Planted vote probability of every node for a bill of the given lean."""
    party = np.asarray(party, dtype=np.float64)
    n = len(party)
    acc = np.zeros(n)
    np.add.at(acc, dst_idx, freq * party[src_idx])
    indeg = np.bincount(dst_idx, minlength=n)
    nbr = acc / np.maximum(indeg, 1)
    return expit(w_p * party * lean + w_c * nbr * lean)


def _gen_graph(cfg: GraphGenConfig, seed: int, k: int):
    rng = rng_for(seed, STREAM_GRAPH, k)
    n = cfg.n
    party = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    seniority = rng.random(n)
    z1 = rng.standard_normal(n)
    z2 = rng.standard_normal(n)
    u_edge = rng.random((n, n))
    freq = rng.uniform(0.1, 1.0, (n, n))
    rel = rng.integers(0, N_REL_TYPES, (n, n))
    lean = float(rng.uniform(-1.0, 1.0))
    u_vote = rng.random(n)

    same = party[:, None] == party[None, :]
    prob = np.where(same, cfg.q_in, cfg.q_out)
    present = u_edge < prob
    np.fill_diagonal(present, False)
    src, dst = np.nonzero(present)  # row-major: sorted by (src, dst)
    A = np.zeros((len(src), len(EDGE_FEATURES)))
    A[:, 0] = freq[src, dst]
    A[np.arange(len(src)), 1 + rel[src, dst]] = 1.0

    pi = vote_probabilities(party, src, dst, A[:, 0], lean, cfg.w_p, cfg.w_c)
    votes = (u_vote < pi).astype(np.float64)
    share = float(votes.mean())
    cols = [party, seniority, z1, z2] + ([np.full(n, lean)] if cfg.expose_lean else [])
    X = np.column_stack(cols)
    g = PoliticalGraph(k, np.arange(n), X, src, dst, A, [float(share > 0.5), share], votes)
    return g, lean, party


def gen_graph_dataset(cfg: GraphGenConfig, seed: int) -> GraphDataset:
    """Generate ``cfg.K`` graphs with party-driven votes.

    Node features are ``[party, seniority, z1, z2]`` (plus ``bill_lean`` when
    exposed), edge features ``[freq, one-hot relationship type]``; node labels
    are votes and the graph label is ``[passed, yes_share]``.
    """
    cfg.validate()
    graphs, leans, parties = [], [], []
    for k in range(cfg.K):
        g, lean, party = _gen_graph(cfg, seed, k)
        graphs.append(g)
        leans.append(lean)
        parties.append(party.astype(int).tolist())
    names = (NODE_FEATURES + ((LEAN_FEATURE,) if cfg.expose_lean else ()), EDGE_FEATURES)
    truth = {"generator": "gen_graph_dataset", "seed": int(seed), "config": asdict(cfg),
             "w_p": cfg.w_p, "w_c": cfg.w_c, "bill_lean": leans, "party": parties}
    ds = GraphDataset(tuple(graphs), cfg.dims, truth, names)
    require(validate_dataset(ds), "generated dataset")
    return ds


def planted_vote_probabilities(ds: GraphDataset, k: int) -> np.ndarray:
    """Recompute the planted vote probabilities of graph position ``k`` from the sidecar."""
    gt = ds.ground_truth
    g = ds.graphs[k]
    return vote_probabilities(gt["party"][k], g.src_idx, g.dst_idx, g.A[:, 0], gt["bill_lean"][k],
                              gt["w_p"], gt["w_c"])


# Sequences --------------------------------------------------------------

def _gen_sequence(cfg: SeqGenConfig, seed: int, k: int, w_override=None):
    rng = rng_for(seed, STREAM_SEQUENCE, k)
    d, T = cfg.d, cfg.T
    w = rng.uniform(-1.0, 1.0, d)
    if w_override is not None:
        w = np.asarray(w_override, dtype=np.float64).reshape(d)
    X = np.zeros((T, d))
    if T:
        X[0] = rng.random(d) < cfg.init_prob
        for t in range(1, T):
            stay = rng.random(d) < cfg.stay_prob
            fresh = rng.random(d) < cfg.init_prob
            X[t] = np.where(stay, X[t - 1], fresh)
    s = hidden_trajectory(X, w, cfg.decay)
    Y = expit(s)[:, None]
    return EventSequence(np.arange(T, dtype=np.float64), X, Y, True), w, s


def hidden_trajectory(X, w, decay) -> np.ndarray:
    """``s_t = decay * s_{t-1} + w . x_t`` starting from zero before the first event."""
    s = np.zeros(len(X))
    prev = 0.0
    for t in range(len(X)):
        prev = decay * prev + float(np.dot(w, X[t]))
        s[t] = prev
    return s


def gen_sequences(cfg: SeqGenConfig, count: int, seed: int, w_override=None) -> SequenceDataset:
    """Markov actor-presence sequences with a leaky-integrator outcome.

    Each actor keeps its bit with probability ``stay_prob`` and otherwise
    redraws it from Bernoulli(``init_prob``).
    """
    cfg.validate()
    seqs, truth = [], []
    for k in range(count):
        seq, w, s = _gen_sequence(cfg, seed, k, w_override)
        seqs.append(seq)
        truth.append({"w": w.tolist(), "s": s.tolist(), "decay": cfg.decay})
    return SequenceDataset(tuple(seqs), cfg.d, 1, truth)


# Hawkes -----------------------------------------------------------------

def simulate_hawkes(params: HawkesParams, T: float, seed: int, force: bool = False) -> MarkedPointProcess:
    """Ogata thinning for the exponential-kernel multivariate Hawkes process.

    The intensity only decays between events, so the total intensity just
    after the current time bounds it until the next accepted event.  Draw
    order per candidate: exponential wait, acceptance uniform, node uniform.
    """
    params.validate()
    if not T > 0:
        raise ConfigError(f"horizon T={T} must be positive")
    if params.is_supercritical():
        msg = f"supercritical influence: max row sum of W/beta = {params.max_row_ratio():.3g} >= 1"
        if not force:
            raise ConfigError(msg + " (pass force=True to simulate anyway)")
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    rng = rng_for(seed, STREAM_HAWKES)
    mu, W, beta = params.mu, params.W, params.beta
    excite = np.zeros(params.n)  # excitation of each target node at time t
    t = 0.0
    times: list[float] = []
    nodes: list[int] = []
    while True:
        bound = float(mu.sum() + excite.sum())
        if bound <= 0:
            break
        wait = rng.exponential(1.0 / bound)
        t_new = t + wait
        if t_new > T:
            break
        excite = excite * np.exp(-beta * wait)
        lam = mu + excite
        total = float(lam.sum())
        u_acc = rng.random()
        if u_acc * bound <= total:
            u_node = rng.random() * total
            node = int(np.searchsorted(np.cumsum(lam), u_node, side="right"))
            node = min(node, params.n - 1)
            if times and t_new <= times[-1]:  # zero-length wait; keep timestamps strict
                continue
            times.append(t_new)
            nodes.append(node)
            excite = excite + beta * W[node]
        t = t_new
    truth = {"mu": params.mu.tolist(), "W": params.W.tolist(), "beta": params.beta, "seed": int(seed)}
    return MarkedPointProcess(T, params.n, times, nodes, truth)


def intensity_at(params: HawkesParams, data: MarkedPointProcess, t: float) -> np.ndarray:
    """Direct-sum intensity of every node at time ``t`` (events strictly before t)."""
    past = data.times < t
    dt = t - data.times[past]
    contrib = params.beta * np.exp(-params.beta * dt)
    return params.mu + (contrib[:, None] * params.W[data.nodes[past]]).sum(axis=0)
