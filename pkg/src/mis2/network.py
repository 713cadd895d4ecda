"""Industry networks and the post-processing of raw industry mixtures.

Two edge kinds connect industries (identified by topic label):

* ``corr: a -- b`` correlation, undirected: each endpoint gains the other's raw weight;
* ``sub: child -> parent`` hierarchy: the child gains the parent's raw weight,
  and the parent gains the raw weight of each direct child.

All increments are computed from the raw mixture and added together, so
neither adjustment cascades and the order of application does not matter.
The output is an improper simplex of relevance scores.
"""
from __future__ import annotations

import graphlib
import logging
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class NetworkError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class IndustryNetwork:
    nodes: set[str] = field(default_factory=set)
    correlation_edges: set[frozenset] = field(default_factory=set)
    hierarchy_edges: set[tuple[str, str]] = field(default_factory=set)

    def add_correlation(self, a: str, b: str):
        self.nodes |= {a, b}
        self.correlation_edges.add(frozenset((a, b)))

    def add_subindustry(self, child: str, parent: str):
        self.nodes |= {child, parent}
        self.hierarchy_edges.add((child, parent))


@dataclass
class ValidationReport:
    ok: bool
    errors: list[str] = field(default_factory=list)
    cycles: list[list[str]] = field(default_factory=list)
    unknown_nodes: list[str] = field(default_factory=list)
    uncovered_topics: list[str] = field(default_factory=list)


@dataclass
class RelevanceScores:
    firm_id: str
    scores: dict[str, float]

    def ranked(self) -> list[tuple[str, float]]:
        return sorted(self.scores.items(), key=lambda kv: (-kv[1], kv[0]))


def validate_network(network: IndustryNetwork, labels=None) -> ValidationReport:
    """Check for hierarchy cycles, self-correlations and edges to unknown industries.

    ``labels`` (the model's topic names) enables the coverage checks; topics
    without any edge are listed in ``uncovered_topics`` for information only.
    """
    errors, cycles = [], []
    for edge in network.correlation_edges:
        if len(edge) != 2:
            errors.append(f"self-correlation on {next(iter(edge))!r}")
    endpoints = set().union(*network.correlation_edges) if network.correlation_edges else set()
    for child, parent in network.hierarchy_edges:
        endpoints |= {child, parent}
    for n in sorted(endpoints - network.nodes):
        errors.append(f"edge endpoint {n!r} is not a node")
    graph: dict[str, set[str]] = {}
    for child, parent in network.hierarchy_edges:
        graph.setdefault(child, set()).add(parent)
    remaining = {n: set(ps) for n, ps in graph.items()}
    while True:
        try:
            graphlib.TopologicalSorter(remaining).prepare()
            break
        except graphlib.CycleError as exc:
            cycle = list(exc.args[1])
            cycles.append(cycle)
            errors.append("hierarchy cycle: " + " -> ".join(cycle))
            _break_cycle(remaining, cycle)
    unknown, uncovered = [], []
    if labels is not None:
        labels = list(labels)
        unknown = sorted((network.nodes | endpoints) - set(labels))
        for n in unknown:
            errors.append(f"node {n!r} is not a topic of the model")
        uncovered = [lab for lab in labels if lab not in endpoints]
    return ValidationReport(not errors, errors, cycles, unknown, uncovered)


def _break_cycle(graph, cycle):
    for x, y in zip(cycle, cycle[1:]):
        for a, b in ((x, y), (y, x)):
            if b in graph.get(a, ()):
                graph[a].discard(b)
                return


def _index(labels, network: IndustryNetwork) -> dict[str, int]:
    idx = {lab: i for i, lab in enumerate(labels)}
    used = {n for e in network.correlation_edges for n in e} | {n for e in network.hierarchy_edges for n in e}
    missing = sorted(used - set(idx))
    if missing:
        raise NetworkError(f"network references industries that are not topics: {missing}")
    return idx


def correlation_increment(theta, network: IndustryNetwork, labels) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    idx = _index(labels, network)
    inc = np.zeros_like(theta)
    for edge in sorted(tuple(sorted(e)) for e in network.correlation_edges):
        if len(edge) != 2:
            continue
        a, b = idx[edge[0]], idx[edge[1]]
        inc[a] += theta[b]
        inc[b] += theta[a]
    return inc


def hierarchy_increment(theta, network: IndustryNetwork, labels) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    idx = _index(labels, network)
    inc = np.zeros_like(theta)
    for child, parent in sorted(network.hierarchy_edges):
        c, p = idx[child], idx[parent]
        inc[c] += theta[p]
        inc[p] += theta[c]
    return inc


def correlation_adjust(theta, network: IndustryNetwork, labels) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return theta + correlation_increment(theta, network, labels)


def hierarchy_adjust(theta, network: IndustryNetwork, labels) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return theta + hierarchy_increment(theta, network, labels)


def adjust(theta, network: IndustryNetwork, labels) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return theta + correlation_increment(theta, network, labels) + hierarchy_increment(theta, network, labels)


def relevance_scores(firm_id: str, theta, network: IndustryNetwork, labels) -> RelevanceScores:
    scores = adjust(theta, network, labels)
    return RelevanceScores(firm_id, {lab: float(s) for lab, s in zip(labels, scores)})


def name_topics(phi, vocab) -> list[str]:
    """Label each topic by its most probable keyphrase, de-duplicated with -2, -3, ..."""
    phi = np.asarray(phi)
    labels, seen = [], {}
    for row in phi:
        top = row.max()
        word = min(vocab[j] for j in np.flatnonzero(row == top))
        seen[word] = seen.get(word, 0) + 1
        labels.append(word if seen[word] == 1 else f"{word}-{seen[word]}")
    return labels


def threshold_scores(scores, cutoff: float):
    """Zero out entries below ``cutoff`` without renormalising."""
    if not 0 <= cutoff < 1:
        raise ValueError("cutoff must lie in [0, 1)")
    if isinstance(scores, RelevanceScores):
        vals = np.array(list(scores.scores.values()))
        out = threshold_scores(vals, cutoff)
        return RelevanceScores(scores.firm_id, dict(zip(scores.scores, map(float, out))))
    arr = np.asarray(scores, dtype=float)
    if arr.size and cutoff > arr.max():
        warnings.warn("cutoff exceeds every score; result is all zero", RuntimeWarning, stacklevel=2)
    return np.where(arr < cutoff, 0.0, arr)


# --------------------------------------------------------------------------
# file format
# --------------------------------------------------------------------------

def parse_network(text: str) -> IndustryNetwork:
    net = IndustryNetwork()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, sep, rest = line.partition(":")
        kind = kind.strip()
        if not sep:
            raise NetworkError(f"expected 'corr:', 'sub:' or 'node:', got {raw.strip()!r}", lineno)
        if kind == "corr":
            a, sep, b = rest.partition("--")
            if not sep or not a.strip() or not b.strip():
                raise NetworkError(f"expected 'corr: a -- b', got {raw.strip()!r}", lineno)
            if a.strip() == b.strip():
                raise NetworkError(f"industry {a.strip()!r} correlated with itself", lineno)
            net.add_correlation(a.strip(), b.strip())
        elif kind == "sub":
            a, sep, b = rest.partition("->")
            if not sep or not a.strip() or not b.strip():
                raise NetworkError(f"expected 'sub: child -> parent', got {raw.strip()!r}", lineno)
            net.add_subindustry(a.strip(), b.strip())
        elif kind == "node":
            net.nodes.add(rest.strip())
        else:
            raise NetworkError(f"unknown line kind {kind!r}", lineno)
    return net


def format_network(network: IndustryNetwork) -> str:
    lines = [f"corr: {a} -- {b}" for a, b in sorted(tuple(sorted(e)) for e in network.correlation_edges)]
    lines += [f"sub: {c} -> {p}" for c, p in sorted(network.hierarchy_edges)]
    linked = {n for e in network.correlation_edges for n in e} | {n for e in network.hierarchy_edges for n in e}
    lines += [f"node: {n}" for n in sorted(network.nodes - linked)]
    return "\n".join(lines) + "\n"


def load_network(path) -> IndustryNetwork:
    return parse_network(Path(path).read_text(encoding="utf-8"))


def demo_network() -> IndustryNetwork:
    return parse_network(resources.files("mis2.data").joinpath("demo_network.txt").read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# "baseball card" exports
# --------------------------------------------------------------------------

def baseball_card(scores: RelevanceScores, cutoff: float = 0.0) -> list[dict]:
    shown = threshold_scores(scores, cutoff) if cutoff else scores
    rows = [(lab, s) for lab, s in shown.ranked() if s > 0]
    return [{"firm_id": scores.firm_id, "label": lab, "relevance": s, "rank": r}
            for r, (lab, s) in enumerate(rows, 1)]


def format_card(scores: RelevanceScores, cutoff: float = 0.0) -> str:
    rows = baseball_card(scores, cutoff)
    width = max([len(r["label"]) for r in rows] + [8])
    out = [f"{scores.firm_id}", f"{'rank':>4}  {'industry':<{width}}  relevance"]
    out += [f"{r['rank']:>4}  {r['label']:<{width}}  {r['relevance']:9.1%}" for r in rows]
    return "\n".join(out)
