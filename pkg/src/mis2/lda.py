"""Latent Dirichlet Allocation fitted by collapsed Gibbs sampling.

The word prior is a full K x V matrix so that every topic can carry its own
pseudo-counts (needed when last year's posterior becomes this year's prior).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import gammaln

from . import kernels
from .textprep import BagOfWords, Corpus

LOG_FLOOR = 1e-12


@dataclass
class DirichletPrior:
    alpha: np.ndarray  # K x V word pseudo-counts, one row per topic
    beta: np.ndarray   # length-K topic pseudo-counts per document

    def __post_init__(self):
        self.alpha = np.atleast_2d(np.asarray(self.alpha, dtype=float))
        self.beta = np.asarray(self.beta, dtype=float).ravel()
        if self.alpha.shape[0] != self.beta.shape[0]:
            raise ValueError(f"alpha has {self.alpha.shape[0]} rows but beta has {self.beta.shape[0]} entries")
        for name, arr in (("alpha", self.alpha), ("beta", self.beta)):
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise ValueError(f"{name} must be strictly positive and finite")

    @classmethod
    def symmetric(cls, k: int, v: int, alpha: float = 0.1, beta: float = 0.5) -> "DirichletPrior":
        return cls(np.full((k, v), float(alpha)), np.full(k, float(beta)))

    @property
    def k(self) -> int:
        return self.alpha.shape[0]

    @property
    def v(self) -> int:
        return self.alpha.shape[1]


@dataclass
class FitConfig:
    sweeps: int = 1000
    burn_in: int = 200
    thin: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.sweeps > self.burn_in >= 0:
            raise ValueError("need sweeps > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")


@dataclass
class Assignments:
    doc_ids: np.ndarray
    word_ids: np.ndarray
    z: np.ndarray
    doc_topic_counts: np.ndarray
    topic_word_counts: np.ndarray
    topic_totals: np.ndarray

    def copy(self) -> "Assignments":
        return Assignments(*(a.copy() for a in (self.doc_ids, self.word_ids, self.z, self.doc_topic_counts,
                                               self.topic_word_counts, self.topic_totals)))

    def check(self):
        """Raise if the count tables disagree with ``z``."""
        M, K = self.doc_topic_counts.shape
        V = self.topic_word_counts.shape[1]
        ndk = np.zeros((M, K), dtype=np.int64)
        nkw = np.zeros((K, V), dtype=np.int64)
        np.add.at(ndk, (self.doc_ids, self.z), 1)
        np.add.at(nkw, (self.z, self.word_ids), 1)
        if not (np.array_equal(ndk, self.doc_topic_counts) and np.array_equal(nkw, self.topic_word_counts)
                and np.array_equal(nkw.sum(1), self.topic_totals)):
            raise AssertionError("count tables inconsistent with z")


@dataclass
class LdaModel:
    phi: np.ndarray
    theta: np.ndarray
    prior: DirichletPrior
    posterior_alpha: np.ndarray
    vocab: list[str] = field(default_factory=list)
    firm_ids: list[str] = field(default_factory=list)
    fit_meta: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.phi.shape[0]

    def topic_totals(self) -> np.ndarray:
        """Token counts per topic in the final sample."""
        return np.rint((self.posterior_alpha - self.prior.alpha).sum(axis=1)).astype(np.int64)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def init_assignments(corpus: Corpus, k: int, seed=0) -> Assignments:
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = _rng(seed)
    doc_ids, word_ids = corpus.tokens()
    z = rng.integers(0, k, size=word_ids.shape[0], dtype=np.int64)
    ndk = np.zeros((corpus.M, k), dtype=np.int64)
    nkw = np.zeros((k, corpus.V), dtype=np.int64)
    np.add.at(ndk, (doc_ids, z), 1)
    np.add.at(nkw, (z, word_ids), 1)
    return Assignments(doc_ids, word_ids, z, ndk, nkw, nkw.sum(axis=1))


def gibbs_sweep(assignments: Assignments, corpus: Corpus, prior: DirichletPrior, rng) -> Assignments:
    """Resample every token once, in corpus order. Updates ``assignments`` in place."""
    a = assignments
    u = _rng(rng).random(a.z.shape[0])
    kernels.lda_sweep(a.doc_ids, a.word_ids, a.z, a.doc_topic_counts, a.topic_word_counts, a.topic_totals,
                      prior.alpha, prior.alpha.sum(axis=1), prior.beta, u)
    return a


def fit_lda(corpus: Corpus, prior: DirichletPrior, k: int, config: FitConfig | None = None) -> LdaModel:
    config = config or FitConfig()
    if corpus.V == 0:
        raise ValueError("empty vocabulary")
    if prior.alpha.shape != (k, corpus.V):
        raise ValueError(f"prior alpha is {prior.alpha.shape}, expected {(k, corpus.V)}")
    rng = np.random.default_rng(config.seed)
    a = init_assignments(corpus, k, rng)
    alpha_sum = prior.alpha.sum(axis=1)
    beta_sum = prior.beta.sum()
    n_doc = a.doc_topic_counts.sum(axis=1, keepdims=True)
    phi_acc = np.zeros((k, corpus.V))
    theta_acc = np.zeros((corpus.M, k))
    samples = 0
    for s in range(config.sweeps):
        gibbs_sweep(a, corpus, prior, rng)
        if s >= config.burn_in and (s - config.burn_in) % config.thin == 0:
            phi_acc += (prior.alpha + a.topic_word_counts) / (alpha_sum + a.topic_totals)[:, None]
            theta_acc += (prior.beta + a.doc_topic_counts) / (beta_sum + n_doc)
            samples += 1
    phi = phi_acc / samples
    theta = theta_acc / samples
    phi /= phi.sum(axis=1, keepdims=True)
    theta /= theta.sum(axis=1, keepdims=True)
    model = LdaModel(
        phi=phi,
        theta=theta,
        prior=prior,
        posterior_alpha=prior.alpha + a.topic_word_counts,
        vocab=list(corpus.vocab),
        firm_ids=corpus.firm_ids,
        fit_meta={"seed": int(config.seed), "sweeps": config.sweeps, "burn_in": config.burn_in,
                  "thin": config.thin, "samples": samples, "backend": kernels.backend()},
    )
    model.fit_meta["log_likelihood"] = float(joint_log_likelihood(model, a, corpus, floor=LOG_FLOOR))
    return model


def infer_mixture(model: LdaModel, bag: BagOfWords, config: FitConfig | None = None) -> np.ndarray:
    """Fold a new document into a fitted model, holding phi at its point estimate."""
    config = config or FitConfig(sweeps=200, burn_in=50, thin=1)
    index = {w: i for i, w in enumerate(model.vocab)}
    unknown = sorted(w for w in bag.counts if w not in index)
    if unknown:
        raise ValueError(f"keyphrases not in model vocabulary: {unknown}")
    beta = model.prior.beta
    if bag.total == 0:
        return beta / beta.sum()
    word_ids = np.repeat([index[w] for w in bag.counts], list(bag.counts.values())).astype(np.int64)
    rng = np.random.default_rng(config.seed)
    z = rng.integers(0, model.k, size=word_ids.shape[0], dtype=np.int64)
    nk = np.bincount(z, minlength=model.k).astype(np.int64)
    acc = np.zeros(model.k)
    samples = 0
    for s in range(config.sweeps):
        kernels.foldin_sweep(word_ids, z, nk, model.phi, beta, rng.random(word_ids.shape[0]))
        if s >= config.burn_in and (s - config.burn_in) % config.thin == 0:
            acc += (beta + nk) / (beta.sum() + word_ids.shape[0])
            samples += 1
    return acc / acc.sum()


def dirichlet_logpdf(x, a) -> np.ndarray:
    """Row-wise Dirichlet log density, normalising constant included."""
    x = np.atleast_2d(x)
    a = np.broadcast_to(a, x.shape)
    with np.errstate(divide="ignore"):
        logx = np.log(x)
    kernel = np.where(a == 1.0, 0.0, (a - 1.0) * logx)
    return gammaln(a.sum(axis=1)) - gammaln(a).sum(axis=1) + kernel.sum(axis=1)


def joint_log_likelihood(model: LdaModel, assignments: Assignments, corpus: Corpus, floor: float | None = None) -> float:
    """Dirichlet priors on phi and theta plus the categorical terms for every token.

    Probabilities are clamped at ``floor`` before taking logs when given.
    Without a floor, a zero probability at an assigned (topic, word) gives
    ``-inf`` and a RuntimeWarning.
    """
    phi, theta = model.phi, model.theta
    if phi.shape != (model.prior.k, corpus.V) or theta.shape != (corpus.M, model.prior.k):
        raise ValueError("model dimensions do not match corpus")
    if floor is not None:
        phi = np.maximum(phi, floor)
        theta = np.maximum(theta, floor)
    a = assignments
    cat = np.concatenate([theta[a.doc_ids, a.z], phi[a.z, a.word_ids]])
    if np.any(cat <= 0):
        warnings.warn("zero probability at an assigned (topic, word)", RuntimeWarning, stacklevel=2)
        return float("-inf")
    total = dirichlet_logpdf(phi, model.prior.alpha).sum()
    total += dirichlet_logpdf(theta, model.prior.beta).sum()
    total += np.log(cat).sum()
    return float(total)


def cosine_matrix(A, B) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    An = A / np.linalg.norm(A, axis=1, keepdims=True)
    Bn = B / np.linalg.norm(B, axis=1, keepdims=True)
    return An @ Bn.T


def align_topics(fitted, reference):
    """Best one-to-one matching of fitted rows to reference rows by cosine.

    Returns ``(ref_idx, fit_idx, cosines)`` from the Hungarian assignment.
    """
    C = cosine_matrix(reference, fitted)
    rows, cols = linear_sum_assignment(-C)
    return rows, cols, C[rows, cols]


def best_match_cosine(fitted, reference) -> float:
    return float(align_topics(fitted, reference)[2].mean())
