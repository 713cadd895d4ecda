"""Hierarchical Dirichlet Process topic model (direct-assignment Gibbs sampler).

The sampler keeps a global weight vector ``eta`` over the live topics plus an
unallocated remainder ``eta_new``. Each sweep:

1. resamples every token's topic. A live topic k has weight
   ``(n_dk + alpha0 * eta_k) * (n_kw + b) / (n_k + V b)`` and a fresh topic
   has weight ``alpha0 * eta_new / V``. Opening a topic splits
   ``eta_new`` by a ``Beta(1, gamma)`` stick fraction.
2. draws table counts with the Antoniak scheme,
   ``m_dk = sum_{i < n_dk} Bernoulli(alpha0 eta_k / (alpha0 eta_k + i))``.
3. redraws the weights, ``(eta_1..eta_K, eta_new) ~ Dirichlet(m_.1, .., m_.K, gamma)``.

Topic slots live in fixed-size arrays of capacity ``k_max``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .textprep import Corpus

log = logging.getLogger(__name__)


@dataclass
class HdpConfig:
    gamma: float = 1.0
    alpha0: float = 1.0
    word_prior: float = 0.1
    sweeps: int = 300
    burn_in: int = 100
    seed: int = 0
    prune_threshold: float = 0.01
    k_max: int = 200

    def __post_init__(self):
        if min(self.gamma, self.alpha0, self.word_prior) <= 0:
            raise ValueError("gamma, alpha0 and word_prior must be positive")
        if not self.sweeps > self.burn_in >= 0:
            raise ValueError("need sweeps > burn_in >= 0")
        if not 0 <= self.prune_threshold < 1:
            raise ValueError("prune_threshold must lie in [0, 1)")


@dataclass
class HdpState:
    z: np.ndarray
    doc_topic_counts: np.ndarray
    topic_word_counts: np.ndarray
    topic_totals: np.ndarray
    active: np.ndarray
    eta: np.ndarray
    eta_new: float

    @property
    def active_topics(self) -> list[int]:
        return [int(k) for k in np.flatnonzero(self.active)]

    def weights(self) -> np.ndarray:
        """Live-topic weights followed by the new-topic remainder."""
        return np.append(self.eta[self.active], self.eta_new)


@dataclass
class HdpResult:
    phi: np.ndarray
    eta: np.ndarray            # kept topics, then the unallocated remainder
    topic_masses: np.ndarray   # fraction of all tokens in each kept topic
    topic_word_counts: np.ndarray
    vocab: list[str] = field(default_factory=list)
    fit_meta: dict = field(default_factory=dict)

    @property
    def k_found(self) -> int:
        return self.phi.shape[0]


def _resample_eta(state: HdpState, alpha0: float, gamma: float, rng):
    u = rng.random(int(state.topic_totals.sum()))
    m = kernels.table_counts(state.doc_topic_counts, state.active, state.eta, alpha0, u)
    live = np.flatnonzero(state.active)
    g = rng.gamma(np.append(m[live], gamma).astype(float))
    g /= g.sum()
    state.eta[:] = 0.0
    state.eta[live] = g[:-1]
    state.eta_new = float(g[-1])


def sample_hdp(corpus: Corpus, config: HdpConfig, callback=None) -> HdpState:
    """Run the sampler and return the final state. ``callback(sweep, state)`` is optional."""
    if corpus.M == 0 or corpus.V == 0:
        raise ValueError("empty corpus")
    doc_ids, word_ids = corpus.tokens()
    N = word_ids.shape[0]
    if N == 0:
        raise ValueError("corpus has no tokens")
    rng = np.random.default_rng(config.seed)
    kmax = config.k_max
    state = HdpState(
        z=np.full(N, -1, dtype=np.int64),
        doc_topic_counts=np.zeros((corpus.M, kmax), dtype=np.int64),
        topic_word_counts=np.zeros((kmax, corpus.V), dtype=np.int64),
        topic_totals=np.zeros(kmax, dtype=np.int64),
        active=np.zeros(kmax, dtype=np.bool_),
        eta=np.zeros(kmax),
        eta_new=1.0,
    )
    stats = np.zeros(2, dtype=np.int64)
    box = np.empty(1)
    for s in range(config.sweeps):
        box[0] = state.eta_new
        kernels.hdp_sweep(doc_ids, word_ids, state.z, state.doc_topic_counts, state.topic_word_counts,
                          state.topic_totals, state.active, state.eta, box, config.alpha0, config.word_prior,
                          rng.random(N), rng.beta(1.0, config.gamma, size=N), stats)
        state.eta_new = float(box[0])
        _resample_eta(state, config.alpha0, config.gamma, rng)
        if callback is not None:
            callback(s, state)
    if stats[1]:
        warnings.warn(f"HDP hit the topic cap k_max={kmax} {int(stats[1])} times", RuntimeWarning, stacklevel=2)
    state.stats = {"opened": int(stats[0]), "cap_hits": int(stats[1])}
    return state


def fit_hdp(corpus: Corpus, config: HdpConfig | None = None) -> HdpResult:
    config = config or HdpConfig()
    trace = []
    state = sample_hdp(corpus, config, callback=lambda s, st: trace.append(int(st.active.sum())))
    live = np.flatnonzero(state.active)
    counts = state.topic_word_counts[live]
    totals = state.topic_totals[live]
    order = np.lexsort((live, -totals))
    live, counts, totals = live[order], counts[order], totals[order]
    phi = (counts + config.word_prior) / (totals + corpus.V * config.word_prior)[:, None]
    result = HdpResult(
        phi=phi,
        eta=np.append(state.eta[live], state.eta_new),
        topic_masses=totals / totals.sum(),
        topic_word_counts=counts,
        vocab=list(corpus.vocab),
        fit_meta={"seed": int(config.seed), "gamma": config.gamma, "alpha0": config.alpha0,
                  "word_prior": config.word_prior, "sweeps": config.sweeps, "burn_in": config.burn_in,
                  "k_trace": trace, "k_raw": int(live.size), "backend": kernels.backend(), **state.stats},
    )
    return prune_topics(result, config.prune_threshold)


def prune_topics(result: HdpResult, threshold: float) -> HdpResult:
    if not 0 <= threshold < 1:
        raise ValueError("threshold must lie in [0, 1)")
    keep = np.flatnonzero(result.topic_masses >= threshold)
    if keep.size == 0:
        raise ValueError(f"no topic has mass >= {threshold}")
    if keep.size == result.k_found:
        return result
    eta = np.append(result.eta[keep], result.eta[-1])
    return HdpResult(
        phi=result.phi[keep],
        eta=eta / eta.sum(),
        topic_masses=result.topic_masses[keep],
        topic_word_counts=result.topic_word_counts[keep],
        vocab=result.vocab,
        fit_meta={**result.fit_meta, "prune_threshold": threshold},
    )
