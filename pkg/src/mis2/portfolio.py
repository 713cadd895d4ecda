"""Similarity scores, portfolio construction and the out-of-sample peer test."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class FirmRecord:
    firm_id: str
    market_cap: float
    mixture: np.ndarray
    relevance: dict[str, float] = field(default_factory=dict)
    gics_sector: str = ""
    gics_industry: str = ""
    factor_loadings: Optional[np.ndarray] = None

    def __post_init__(self):
        self.mixture = np.asarray(self.mixture, dtype=float)
        if self.market_cap < 0:
            raise ValueError(f"firm {self.firm_id}: negative market cap")


@dataclass
class SimilarityWeights:
    lambda_text: float = 1 / 3
    lambda_returns: float = 1 / 3
    lambda_factors: float = 1 / 3

    def __post_init__(self):
        parts = (self.lambda_text, self.lambda_returns, self.lambda_factors)
        if min(parts) < 0 or abs(sum(parts) - 1) > 1e-9:
            raise ValueError(f"similarity weights must be >= 0 and sum to 1, got {parts}")


class ReturnsPanel:
    """Aligned periodic returns, one column per firm."""

    def __init__(self, dates, firm_ids, values):
        self.dates = np.asarray(dates, dtype="datetime64[D]")
        self.firm_ids = list(firm_ids)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (self.dates.shape[0], len(self.firm_ids)):
            raise ValueError(f"returns shape {self.values.shape} does not match "
                             f"{self.dates.shape[0]} dates x {len(self.firm_ids)} firms")
        if np.unique(self.dates).shape[0] != self.dates.shape[0]:
            raise ValueError("duplicated dates in returns panel")
        if len(set(self.firm_ids)) != len(self.firm_ids):
            raise ValueError("duplicated firm ids in returns panel")
        self._col = {f: i for i, f in enumerate(self.firm_ids)}

    def __contains__(self, firm_id):
        return firm_id in self._col

    def __len__(self):
        return self.dates.shape[0]

    def series(self, firm_id) -> np.ndarray:
        return self.values[:, self._col[firm_id]]

    def between(self, start=None, end=None) -> "ReturnsPanel":
        """Rows with ``start <= date <= end`` (ISO strings or datetime64)."""
        mask = np.ones(len(self), dtype=bool)
        if start is not None:
            mask &= self.dates >= np.datetime64(start, "D")
        if end is not None:
            mask &= self.dates <= np.datetime64(end, "D")
        return ReturnsPanel(self.dates[mask], self.firm_ids, self.values[mask])

    def years(self, first: int, last: int) -> "ReturnsPanel":
        return self.between(f"{first}-01-01", f"{last}-12-31")

    def permuted(self, rng) -> "ReturnsPanel":
        """Same columns with the rows shuffled (for causality audits)."""
        order = np.random.default_rng(rng).permutation(len(self))
        return ReturnsPanel(self.dates, self.firm_ids, self.values[order])


@dataclass
class EvalReport:
    per_firm: dict[str, dict] = field(default_factory=dict)
    peers: dict[str, dict] = field(default_factory=dict)
    skipped: dict[str, str] = field(default_factory=dict)
    group_stats: dict[str, dict] = field(default_factory=dict)

    def diffs(self) -> np.ndarray:
        return np.array([row["diff"] for row in self.per_firm.values()])

    def records(self) -> list[dict]:
        return [{"firm_id": f, **row} for f, row in self.per_firm.items()]


# --------------------------------------------------------------------------
# similarity
# --------------------------------------------------------------------------

def text_similarity(theta_i, theta_j) -> float:
    """Overlap of two industry mixtures: the sum of entrywise minima."""
    a = np.asarray(theta_i, dtype=float)
    b = np.asarray(theta_j, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"mixtures have different lengths {a.shape} and {b.shape}")
    return float(np.minimum(a, b).sum())


def returns_correlation(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("return series differ in length")
    if a.shape[0] < 2:
        raise ValueError("need at least two periods")
    da, db = a - a.mean(), b - b.mean()
    sa, sb = np.sqrt(da @ da), np.sqrt(db @ db)
    if sa == 0 or sb == 0:
        raise ValueError("zero-variance return series")
    return float(np.clip((da @ db) / (sa * sb), -1.0, 1.0))


def factor_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("zero factor-loading vector")
    return float(a @ b / (na * nb))


def composite_similarity(i: FirmRecord, j: FirmRecord, weights: SimilarityWeights,
                         panel: ReturnsPanel | None = None) -> float:
    score = 0.0
    if weights.lambda_text:
        score += weights.lambda_text * text_similarity(i.mixture, j.mixture)
    if weights.lambda_returns:
        if panel is None or i.firm_id not in panel or j.firm_id not in panel:
            raise ValueError(f"returns needed for {i.firm_id} and {j.firm_id} (lambda_returns > 0)")
        score += weights.lambda_returns * returns_correlation(panel.series(i.firm_id), panel.series(j.firm_id))
    if weights.lambda_factors:
        if i.factor_loadings is None or j.factor_loadings is None:
            raise ValueError(f"factor loadings needed for {i.firm_id} and {j.firm_id} (lambda_factors > 0)")
        score += weights.lambda_factors * factor_similarity(i.factor_loadings, j.factor_loadings)
    return score


# --------------------------------------------------------------------------
# portfolios
# --------------------------------------------------------------------------

def dollar_exposure(firm: FirmRecord, theme: str) -> float:
    if firm.market_cap < 0:
        raise ValueError(f"firm {firm.firm_id}: negative market cap")
    return firm.market_cap * firm.relevance.get(theme, 0.0)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / ks > 0)[-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def mean_variance_weights(candidates, covariance, risk_aversion: float = 1.0, expected_returns=None,
                          max_iter: int = 100_000, tol: float = 1e-14) -> np.ndarray:
    """Long-only, fully-invested weights minimising ``ra * w'Sw - mu'w``.

    Projected gradient descent from equal weights; with ``mu`` omitted this
    is the long-only minimum-variance portfolio.
    """
    S = np.asarray(covariance, dtype=float)
    n = len(candidates)
    if S.shape != (n, n):
        raise ValueError(f"covariance is {S.shape}, expected {(n, n)}")
    if not np.allclose(S, S.T, atol=1e-12):
        raise ValueError("covariance is not symmetric")
    eig = np.linalg.eigvalsh(S)
    if eig.min() < -1e-8:
        raise ValueError(f"covariance is not positive semidefinite (min eigenvalue {eig.min():.3g})")
    mu = np.zeros(n) if expected_returns is None else np.asarray(expected_returns, dtype=float)
    w = np.full(n, 1.0 / n)
    lipschitz = 2 * risk_aversion * eig.max()
    if lipschitz <= 0:
        return w
    step = 1.0 / lipschitz
    for _ in range(max_iter):
        nxt = project_simplex(w - step * (2 * risk_aversion * S @ w - mu))
        if np.max(np.abs(nxt - w)) < tol:
            w = nxt
            break
        w = nxt
    return w


@dataclass
class Holding:
    firm_id: str
    weight: float
    exposure: float


def thematic_portfolio(universe: list[FirmRecord], theme: str, n: int = 50, covariance=None,
                       risk_aversion: float = 1.0) -> list[Holding]:
    """Top ``n`` firms by dollar exposure to ``theme``.

    ``covariance`` (aligned with ``universe``) switches equal weights to
    long-only mean-variance weights.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not universe:
        raise ValueError("empty universe")
    exposures = [(dollar_exposure(f, theme), f.firm_id, i) for i, f in enumerate(universe)]
    ranked = sorted((e for e in exposures if e[0] > 0), key=lambda e: (-e[0], e[1]))
    if len(ranked) < n:
        warnings.warn(f"only {len(ranked)} firms have positive exposure to {theme!r}", RuntimeWarning, stacklevel=2)
    picks = ranked[:n]
    if not picks:
        return []
    if covariance is None:
        w = np.full(len(picks), 1.0 / len(picks))
    else:
        idx = [i for _, _, i in picks]
        w = mean_variance_weights([p[1] for p in picks], np.asarray(covariance)[np.ix_(idx, idx)], risk_aversion)
    return [Holding(fid, float(wt), float(e)) for (e, fid, _), wt in zip(picks, w)]


Predicate = Callable[[FirmRecord], bool]


def nearest_neighbors(firm: FirmRecord, universe: list[FirmRecord], weights: SimilarityWeights,
                      panel: ReturnsPanel | None = None, n: int = 50,
                      exclude: Predicate | None = None) -> list[tuple[str, float]]:
    """Top ``n`` firms by composite similarity, never including ``firm`` itself.

    ``exclude`` is an optional filter (size, idiosyncratic risk, ...) that
    drops candidates for which it returns True.
    """
    if all(f.firm_id != firm.firm_id for f in universe):
        raise ValueError(f"firm {firm.firm_id} is not in the universe")
    others = [f for f in universe if f.firm_id != firm.firm_id and not (exclude and exclude(f))]
    if not others:
        warnings.warn(f"no candidate neighbours for {firm.firm_id}", RuntimeWarning, stacklevel=2)
        return []
    scored = [(f.firm_id, composite_similarity(firm, f, weights, panel)) for f in others]
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[:n]


# --------------------------------------------------------------------------
# out-of-sample test
# --------------------------------------------------------------------------

def peer_correlation(firm_id: str, peers, panel: ReturnsPanel) -> float:
    """Correlation of a firm with the equal-weighted portfolio of its peers."""
    peers = sorted(peers)
    basket = panel.values[:, [panel.firm_ids.index(p) for p in peers]].mean(axis=1)
    return returns_correlation(panel.series(firm_id), basket)


def oos_test(universe: list[FirmRecord], panel_train: ReturnsPanel, panel_test: ReturnsPanel,
             weights: SimilarityWeights, gics_map: dict[str, tuple[str, str]] | None = None,
             n: int = 50, exclude: Predicate | None = None) -> EvalReport:
    """Compare MIS nearest-neighbour peers with GICS-industry peers on future correlation.

    Peers are chosen from ``panel_train`` only; correlations use ``panel_test``.
    ``gics_map`` maps firm_id to (sector, industry) and defaults to the
    labels on the firm records.
    """
    if len(panel_test) == 0:
        raise ValueError("empty test window")
    if len(panel_train) and panel_test.dates.min() <= panel_train.dates.max():
        raise ValueError("test window must start after the training window ends")
    if gics_map is None:
        gics_map = {f.firm_id: (f.gics_sector, f.gics_industry) for f in universe}
    report = EvalReport()
    for firm in universe:
        fid = firm.firm_id
        if fid not in panel_test or fid not in gics_map:
            report.skipped[fid] = "missing test returns or GICS label"
            continue
        sector, industry = gics_map[fid]
        gics_peers = sorted(f.firm_id for f in universe
                            if f.firm_id != fid and gics_map.get(f.firm_id, (None, None))[1] == industry
                            and f.firm_id in panel_test)
        if not gics_peers:
            report.skipped[fid] = "no GICS industry peers"
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            nn = nearest_neighbors(firm, universe, weights, panel_train, n, exclude)
        mis_peers = sorted(p for p, _ in nn if p in panel_test)
        if not mis_peers:
            report.skipped[fid] = "no MIS neighbours"
            continue
        mis_corr = peer_correlation(fid, mis_peers, panel_test)
        gics_corr = peer_correlation(fid, gics_peers, panel_test)
        report.per_firm[fid] = {"sector": sector, "industry": industry, "mis_corr": mis_corr,
                                "gics_corr": gics_corr, "diff": mis_corr - gics_corr}
        report.peers[fid] = {"mis": mis_peers, "gics": gics_peers}
    report.group_stats = {"sector": group_stats(report, "sector"), "industry": group_stats(report, "industry")}
    if report.skipped:
        log.info("oos_test skipped %d firms", len(report.skipped))
    return report


def group_stats(report: EvalReport, level: str = "sector") -> dict[str, dict]:
    groups: dict[str, list[float]] = {}
    for row in report.per_firm.values():
        groups.setdefault(row[level], []).append(row["diff"])
    out = {}
    for name, vals in groups.items():
        q1, med, q3 = np.percentile(vals, [25, 50, 75])
        out[name] = {"median": float(med), "q1": float(q1), "q3": float(q3), "count": len(vals)}
    return dict(sorted(out.items(), key=lambda kv: -kv[1]["median"]))


def plot_report(report: EvalReport, path, level: str = "sector"):
    """Box plot of MIS minus GICS correlation per group, sorted by median."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    stats = group_stats(report, level)
    names = list(stats)
    data = [[r["diff"] for r in report.per_firm.values() if r[level] == g] for g in names]
    fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(names) + 2), 4.5))
    if data:
        ax.boxplot(data, showfliers=False)
        ax.set_xticks(range(1, len(names) + 1), names, rotation=60, ha="right", fontsize=8)
    ax.axhline(0.0, color="grey", lw=0.8, ls="--")
    ax.set_ylabel("MIS correlation - GICS correlation")
    ax.set_title(f"Out-of-sample peer correlation by GICS {level}")
    fig.tight_layout()
    fig.savefig(Path(path), dpi=120)
    plt.close(fig)
