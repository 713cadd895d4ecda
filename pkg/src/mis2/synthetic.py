"""Planted-topic corpora and returns panels for tests and benchmarks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .textprep import BagOfWords, Corpus


@dataclass
class PlantedModel:
    phi: np.ndarray
    vocab: list[str]
    doc_concentration: float


def planted_model(k=5, v=50, topic_concentration=0.1, doc_concentration=0.2, seed=0) -> PlantedModel:
    rng = np.random.default_rng(seed)
    phi = rng.dirichlet(np.full(v, topic_concentration), size=k)
    return PlantedModel(phi, [f"w{j:03d}" for j in range(v)], doc_concentration)


def sample_corpus(model: PlantedModel, m=500, n=100, seed=0, prefix="f"):
    """Draw ``m`` documents of ``n`` tokens. Returns ``(corpus, theta)``."""
    rng = np.random.default_rng(seed)
    k, v = model.phi.shape
    theta = rng.dirichlet(np.full(k, model.doc_concentration), size=m)
    docs = []
    for d in range(m):
        z = rng.choice(k, size=n, p=theta[d])
        words = np.concatenate([rng.choice(v, size=c, p=model.phi[t]) for t, c in
                                enumerate(np.bincount(z, minlength=k)) if c])
        counts = np.bincount(words, minlength=v)
        docs.append((f"{prefix}{d:04d}", BagOfWords({model.vocab[j]: int(c) for j, c in enumerate(counts) if c})))
    return Corpus(docs, model.vocab), theta


def planted_corpus(k=5, v=50, m=500, n=100, seed=0):
    """The standard planted instance: ``(corpus, phi_true, theta_true)``."""
    model = planted_model(k, v, seed=seed)
    corpus, theta = sample_corpus(model, m, n, seed=seed + 1)
    return corpus, model.phi, theta


def drifted(model: PlantedModel, topic: int, target: np.ndarray, weight=0.7) -> PlantedModel:
    phi = model.phi.copy()
    phi[topic] = (1 - weight) * phi[topic] + weight * target
    return PlantedModel(phi, model.vocab, model.doc_concentration)


def block_universe(n_blocks=4, per_block=25, k=8, t_train=250, t_test=250, noise=1.0, seed=0):
    """Firms in blocks whose text mixtures and returns share a block factor.

    Returns ``(firm_ids, mixtures, block_of, train_returns, test_returns)``;
    returns arrays are ``T x F``.
    """
    rng = np.random.default_rng(seed)
    F = n_blocks * per_block
    block_of = np.repeat(np.arange(n_blocks), per_block)
    centers = rng.dirichlet(np.full(k, 0.3), size=n_blocks)
    mixtures = np.array([rng.dirichlet(50 * centers[b] + 0.05) for b in block_of])
    ids = [f"F{i:03d}" for i in range(F)]

    def panel(T):
        market = rng.normal(0, 0.01, size=(T, 1))
        factors = rng.normal(0, 0.01, size=(T, n_blocks))
        idio = rng.normal(0, 0.01 * noise, size=(T, F))
        return market + factors[:, block_of] + idio

    return ids, mixtures, block_of, panel(t_train), panel(t_test)
