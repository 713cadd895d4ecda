import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from mis2 import kernels
from mis2.lda import (DirichletPrior, FitConfig, LdaModel, align_topics, best_match_cosine, cosine_matrix,
                      dirichlet_logpdf, fit_lda, gibbs_sweep, infer_mixture, init_assignments,
                      joint_log_likelihood)
from mis2.synthetic import planted_corpus
from mis2.textprep import BagOfWords, Corpus
from tests.oracles import lda_enumeration as oracle

FROZEN = {(0, 0): 0.3068928888370128, (0, 1): 0.7080512084669918,
          (1, 1): 0.6697159760341213, (1, 2): 0.1884763784627875}


def _enum_corpus():
    vocab = ["a", "b", "c"]
    docs = []
    for d, words in enumerate(oracle.DOCS):
        counts = {}
        for w in words:
            counts[vocab[w]] = counts.get(vocab[w], 0) + 1
        docs.append((f"d{d}", BagOfWords(counts)))
    return Corpus(docs, vocab)


def test_oracle_reproduces_frozen_marginals():
    got = oracle.pair_marginals()
    assert got.keys() == FROZEN.keys()
    for key, p in FROZEN.items():
        assert got[key] == pytest.approx(p, abs=1e-15)


def test_single_token_conditional_matches_oracle():
    """One kernel step realises the collapsed conditional implied by the joint."""
    corpus = _enum_corpus()
    prior = DirichletPrior(np.array(oracle.ALPHA), np.array(oracle.BETA))
    a = init_assignments(corpus, 2, seed=1)
    z_fixed = a.z.copy()
    flat = [(d, w) for d, doc in enumerate(oracle.DOCS) for w in doc]
    # the corpus token order is canonical per doc; map oracle positions accordingly
    assert sorted(flat) == sorted(zip(a.doc_ids.tolist(), a.word_ids.tolist()))
    order = sorted(range(len(flat)), key=lambda i: flat[i])
    for i in range(len(z_fixed)):
        zs = []
        for k in range(2):
            z = z_fixed.copy()
            z[i] = k
            zo = [0] * len(flat)
            for pos, tok in zip(order, range(len(flat))):
                zo[pos] = int(z[tok])
            zs.append(oracle.log_joint(zo))
        p0 = 1.0 / (1.0 + math.exp(zs[1] - zs[0]))
        for u, expect in ((p0 - 1e-9, 0), (p0 + 1e-9, 1)):
            b = a.copy()
            b.z[:] = z_fixed
            b.doc_topic_counts[:] = 0
            b.topic_word_counts[:] = 0
            np.add.at(b.doc_topic_counts, (b.doc_ids, b.z), 1)
            np.add.at(b.topic_word_counts, (b.z, b.word_ids), 1)
            b.topic_totals[:] = b.topic_word_counts.sum(axis=1)
            kernels.lda_sweep(b.doc_ids[i:i + 1], b.word_ids[i:i + 1], b.z[i:i + 1], b.doc_topic_counts,
                              b.topic_word_counts, b.topic_totals, prior.alpha, prior.alpha.sum(axis=1),
                              prior.beta, np.array([u]))
            assert b.z[i] == expect


def test_prior_validation():
    with pytest.raises(ValueError):
        DirichletPrior(np.array([[1.0, -1.0]]), np.array([1.0]))
    with pytest.raises(ValueError):
        DirichletPrior(np.array([[1.0, np.inf]]), np.array([1.0]))
    with pytest.raises(ValueError):
        DirichletPrior(np.ones((2, 3)), np.ones(3))
    p = DirichletPrior.symmetric(3, 4, alpha=0.2, beta=0.7)
    assert p.k == 3 and p.v == 4 and np.all(p.alpha == 0.2) and np.all(p.beta == 0.7)


def test_fit_config_validation():
    with pytest.raises(ValueError):
        FitConfig(sweeps=10, burn_in=10)
    with pytest.raises(ValueError):
        FitConfig(thin=0)


def test_sweeps_keep_counts_consistent():
    corpus, _, _ = planted_corpus(k=3, v=15, m=20, n=20, seed=3)
    prior = DirichletPrior.symmetric(3, 15)
    rng = np.random.default_rng(0)
    a = init_assignments(corpus, 3, rng)
    for _ in range(5):
        gibbs_sweep(a, corpus, prior, rng)
        a.check()


@pytest.fixture(scope="module")
def small_fit():
    corpus, phi, theta = planted_corpus(k=3, v=30, m=150, n=60, seed=7)
    model = fit_lda(corpus, DirichletPrior.symmetric(3, 30), 3, FitConfig(300, 100, 2, seed=1))
    return corpus, phi, theta, model


def test_fit_outputs_are_simplices(small_fit):
    corpus, _, _, model = small_fit
    assert model.phi.shape == (3, 30) and model.theta.shape == (corpus.M, 3)
    np.testing.assert_allclose(model.phi.sum(axis=1), 1)
    np.testing.assert_allclose(model.theta.sum(axis=1), 1)
    assert model.fit_meta["samples"] == 100
    assert np.isfinite(model.fit_meta["log_likelihood"])
    assert model.topic_totals().sum() == corpus.count_matrix().sum()


def test_fit_recovers_small_planted(small_fit):
    _, phi, theta, model = small_fit
    assert best_match_cosine(model.phi, phi) > 0.95
    rows, cols, _ = align_topics(model.phi, phi)
    err = np.abs(model.theta[:, cols] - theta[:, rows]).sum(axis=1).mean()
    assert err < 0.35


def test_fit_is_deterministic():
    corpus, _, _ = planted_corpus(k=2, v=10, m=20, n=15, seed=2)
    prior = DirichletPrior.symmetric(2, 10)
    cfg = FitConfig(50, 10, 1, seed=9)
    a, b = fit_lda(corpus, prior, 2, cfg), fit_lda(corpus, prior, 2, cfg)
    np.testing.assert_array_equal(a.phi, b.phi)
    np.testing.assert_array_equal(a.theta, b.theta)
    c = fit_lda(corpus, prior, 2, FitConfig(50, 10, 1, seed=10))
    assert not np.array_equal(a.theta, c.theta)


def test_fit_rejects_mismatched_prior():
    corpus, _, _ = planted_corpus(k=2, v=10, m=5, n=5, seed=2)
    with pytest.raises(ValueError):
        fit_lda(corpus, DirichletPrior.symmetric(2, 11), 2, FitConfig(10, 2, 1))


def test_infer_mixture(small_fit):
    corpus, _, _, model = small_fit
    top = np.argsort(model.phi[1])[::-1][:3]
    bag = BagOfWords({model.vocab[j]: 10 for j in top})
    theta = infer_mixture(model, bag)
    assert theta.argmax() == 1 and theta[1] > 0.8
    np.testing.assert_allclose(theta.sum(), 1)
    empty = infer_mixture(model, BagOfWords({}))
    np.testing.assert_allclose(empty, model.prior.beta / model.prior.beta.sum())
    with pytest.raises(ValueError, match="vocabulary"):
        infer_mixture(model, BagOfWords({"nope": 1}))


def test_dirichlet_logpdf_matches_scipy():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.uniform(0.3, 4, size=5)
        x = rng.dirichlet(np.ones(5))
        assert dirichlet_logpdf(x, a)[0] == pytest.approx(stats.dirichlet.logpdf(x, a), rel=1e-12)


def test_log_likelihood_zero_probability():
    corpus = Corpus([("d", BagOfWords({"a": 1}))], ["a", "b"])
    prior = DirichletPrior(np.ones((1, 2)), np.ones(1))
    model = LdaModel(np.array([[0.0, 1.0]]), np.array([[1.0]]), prior, prior.alpha, ["a", "b"], ["d"], {})
    a = init_assignments(corpus, 1)
    with pytest.warns(RuntimeWarning):
        assert joint_log_likelihood(model, a, corpus) == -np.inf
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert np.isfinite(joint_log_likelihood(model, a, corpus, floor=1e-12))


def test_cosine_and_alignment_recover_permutation():
    rng = np.random.default_rng(1)
    ref = rng.dirichlet(np.full(20, 0.1), size=4)
    perm = np.array([2, 0, 3, 1])
    rows, cols, cos = align_topics(ref[perm], ref)
    np.testing.assert_array_equal(perm[cols], rows)
    np.testing.assert_allclose(cos, 1)
    np.testing.assert_allclose(np.diag(cosine_matrix(ref, ref)), 1)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_init_assignments_counts(k, v, seed):
    rng = np.random.default_rng(seed)
    docs = [(f"d{i}", BagOfWords({f"w{j}": int(c) for j, c in enumerate(rng.integers(0, 3, v)) if c}))
            for i in range(3)]
    corpus = Corpus(docs, [f"w{j}" for j in range(v)])
    a = init_assignments(corpus, k, seed)
    a.check()
    assert a.doc_topic_counts.sum(axis=1).tolist() == corpus.count_matrix().sum(axis=1).tolist()
