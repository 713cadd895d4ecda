"""Ensemble discovery in the first year, then year-over-year LDA chaining.

Year 1: S HDP fits (same hyperparameters, different seeds) are pooled, topics
that recur in at least ``quorum`` members become the consensus, and the
consensus seeds an Empirical Bayes prior for an LDA fit with K fixed.
Later years: last year's posterior pseudo-counts, raised entrywise to
``dilution_exponent``, are this year's prior. K never changes after year 1.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .hdp import HdpConfig, HdpResult, fit_hdp
from .lda import DirichletPrior, FitConfig, LdaModel, cosine_matrix, fit_lda
from .network import name_topics
from .textprep import Corpus

log = logging.getLogger(__name__)

PRIOR_FLOOR = 0.01
DRIFT_ALARM = 0.05


def derive_seed(master: int, stream: str) -> int:
    """Deterministic 63-bit seed for a named sub-stream such as ``"hdp/3"``."""
    digest = hashlib.sha256(f"{int(master)}:{stream}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass
class EnsembleConfig:
    members: int = 8
    quorum: int | None = None
    match_threshold: float = 0.8
    prior_strength: float = 100.0
    dilution_exponent: float = 0.5

    def __post_init__(self):
        if self.quorum is None:
            self.quorum = math.ceil(self.members / 2)
        if not 1 <= self.quorum <= self.members:
            raise ValueError("need 1 <= quorum <= members")
        if not 0 < self.match_threshold <= 1:
            raise ValueError("match_threshold must lie in (0, 1]")
        if self.prior_strength < 0:
            raise ValueError("prior_strength must be >= 0")
        if not 0 < self.dilution_exponent <= 1:
            raise ValueError("dilution_exponent must lie in (0, 1]")


@dataclass
class PipelineConfig:
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    hdp: HdpConfig = field(default_factory=HdpConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    seed: int = 42
    workers: int = 1
    allow_gaps: bool = False

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class YearSnapshot:
    year: int
    prior: DirichletPrior
    model: LdaModel
    k: int
    topic_labels: list[str]
    provenance: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# consensus
# --------------------------------------------------------------------------

def match_topics(members: list[HdpResult], config: EnsembleConfig) -> list[np.ndarray]:
    """Greedy agglomerative clustering of topics pooled across ensemble members.

    Clusters merge while their centroids have cosine >= ``match_threshold``
    and no member would contribute two topics. Clusters drawing on at least
    ``quorum`` members survive; each yields its renormalised mean topic.
    """
    if not members:
        raise ValueError("no ensemble members")
    V = members[0].phi.shape[1]
    if any(m.phi.shape[1] != V for m in members):
        raise ValueError("members disagree on vocabulary size")
    vecs, owner, mass = [], [], []
    for i, m in enumerate(members):
        for row, w in zip(m.phi, m.topic_masses):
            vecs.append(row)
            owner.append(i)
            mass.append(float(w))
    clusters = [{"items": [j], "owners": {owner[j]}, "sum": np.array(vecs[j], dtype=float)}
                for j in range(len(vecs))]
    while True:
        if len(clusters) < 2:
            break
        C = cosine_matrix([c["sum"] for c in clusters], [c["sum"] for c in clusters])
        best, pair = -1.0, None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                if C[a, b] > best and not clusters[a]["owners"] & clusters[b]["owners"]:
                    best, pair = C[a, b], (a, b)
        if pair is None or best < config.match_threshold:
            break
        a, b = pair
        ca, cb = clusters[a], clusters.pop(b)
        ca["items"] += cb["items"]
        ca["owners"] |= cb["owners"]
        ca["sum"] = ca["sum"] + cb["sum"]
    kept = [c for c in clusters if len(c["owners"]) >= config.quorum]
    kept.sort(key=lambda c: (-len(c["owners"]), -sum(mass[j] for j in c["items"])))
    return [c["sum"] / c["sum"].sum() for c in kept]


def build_empirical_prior(consensus, strength: float, v: int) -> DirichletPrior:
    consensus = [np.asarray(phi, dtype=float) for phi in consensus]
    if not consensus:
        raise ValueError("empty consensus")
    if any(phi.shape != (v,) for phi in consensus):
        raise ValueError(f"consensus topics must have length {v}")
    alpha = strength * np.vstack(consensus) + PRIOR_FLOOR
    return DirichletPrior(alpha, np.ones(len(consensus)))


def chain_prior(posterior_alpha, dilution_exponent: float, beta=None) -> DirichletPrior:
    posterior_alpha = np.asarray(posterior_alpha, dtype=float)
    if np.any(posterior_alpha <= 0):
        raise ValueError("posterior pseudo-counts must be positive")
    beta = np.ones(posterior_alpha.shape[0]) if beta is None else beta
    return DirichletPrior(posterior_alpha ** dilution_exponent, beta)


# --------------------------------------------------------------------------
# yearly fits
# --------------------------------------------------------------------------

def fit_ensemble(corpus: Corpus, config: PipelineConfig, year: int) -> list[HdpResult]:
    seeds = [derive_seed(config.seed, f"hdp/{year}/{i}") for i in range(config.ensemble.members)]
    cfgs = [replace(config.hdp, seed=s) for s in seeds]
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            return list(pool.map(lambda c: fit_hdp(corpus, c), cfgs))
    return [fit_hdp(corpus, c) for c in cfgs]


def reconcile_vocab(prev_vocab, vocab) -> list[str]:
    known = set(prev_vocab)
    return list(prev_vocab) + sorted(w for w in vocab if w not in known)


def run_year(corpus: Corpus, prev: YearSnapshot | None, config: PipelineConfig, year: int | None = None) -> YearSnapshot:
    if corpus.M == 0:
        raise ValueError("empty corpus")
    year = (prev.year + 1 if prev is not None else 1) if year is None else year
    lda_seed = derive_seed(config.seed, f"lda/{year}")
    fit_cfg = replace(config.fit, seed=lda_seed)
    provenance = {"config_digest": config.digest(), "master_seed": config.seed, "lda_seed": lda_seed}
    if prev is None:
        members = fit_ensemble(corpus, config, year)
        consensus = match_topics(members, config.ensemble)
        if not consensus:
            raise RuntimeError("no topic reached the ensemble quorum")
        prior = build_empirical_prior(consensus, config.ensemble.prior_strength, corpus.V)
        provenance["hdp_seeds"] = [m.fit_meta["seed"] for m in members]
        provenance["hdp_k_found"] = [m.k_found for m in members]
    else:
        vocab = reconcile_vocab(prev.model.vocab, corpus.vocab)
        corpus = corpus.reindex(vocab)
        chained = chain_prior(prev.model.posterior_alpha, config.ensemble.dilution_exponent, prev.model.prior.beta)
        alpha = np.full((prev.k, len(vocab)), PRIOR_FLOOR)
        alpha[:, :chained.alpha.shape[1]] = chained.alpha
        prior = DirichletPrior(alpha, chained.beta)
    k = prior.k
    model = fit_lda(corpus, prior, k, fit_cfg)
    labels = name_topics(model.phi, model.vocab)
    if prev is not None:
        share_now = model.topic_totals() / max(model.topic_totals().sum(), 1)
        share_then = prev.model.topic_totals() / max(prev.model.topic_totals().sum(), 1)
        jump = share_now - share_then
        provenance["max_share_increase"] = float(jump.max())
        if jump.max() > DRIFT_ALARM:
            warnings.warn(f"year {year}: topic {int(jump.argmax())} gained {jump.max():.1%} of tokens; "
                          "K is fixed, consider refitting the ensemble", RuntimeWarning, stacklevel=2)
        provenance["phi_cosine_vs_prev"] = _aligned_cosines(prev.model, model)
    return YearSnapshot(year, prior, model, k, labels, provenance)


def _aligned_cosines(prev: LdaModel, model: LdaModel) -> list[float]:
    """Per-topic cosine to last year's topic with the same index, on the shared vocabulary."""
    v = len(prev.vocab)
    C = cosine_matrix(model.phi[:, :v], prev.phi)
    return [float(x) for x in np.diag(C)]


def run_pipeline(corpora: dict[int, Corpus], config: PipelineConfig) -> list[YearSnapshot]:
    if not corpora:
        raise ValueError("no corpora")
    years = sorted(corpora)
    gaps = [b for a, b in zip(years, years[1:]) if b != a + 1]
    if gaps and not config.allow_gaps:
        raise ValueError(f"years are not contiguous (gap before {gaps[0]})")
    out: list[YearSnapshot] = []
    prev = None
    for year in years:
        prev = run_year(corpora[year], prev, config, year=year)
        out.append(prev)
    return out
