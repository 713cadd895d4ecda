"""Keyphrase extraction with semantic trees.

A lexicon is a set of trees. Each tree has one root keyphrase and three kinds
of edges that funnel raw tokens towards it:

* synonym edges ``token -> token`` (lemmatisation, "marketplace" -> "retail"),
* compound edges ``(token, token, ...) -> token`` (n-grams, "e" + "commerce"),
* terminal edges ``token -> root``.

Extraction lowercases and tokenises the text, normalises every token (stem
unless the raw form is already known to the lexicon), resolves synonyms,
composes compounds greedily left to right with the longest match first, and
finally emits every token that reaches a root. Everything else is dropped.
"""
from __future__ import annotations

import graphlib
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

log = logging.getLogger(__name__)

#: Ordered suffix rules; the first rule that matches is applied once, provided
#: the result has at least ``MIN_STEM`` characters and keeps at least two
#: characters of the original word.
DEFAULT_STEM_RULES: tuple[tuple[str, str], ...] = (
    ("ations", "ate"),
    ("ation", "ate"),
    ("ings", ""),
    ("ing", ""),
    ("ers", ""),
    ("er", ""),
    ("sses", "ss"),
    ("ches", "ch"),
    ("shes", "sh"),
    ("xes", "x"),
    ("ss", "ss"),
    ("s", ""),
)
MIN_STEM = 3

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_VALID_TOKEN_RE = re.compile(r"^[^\sA-Z]+$")


class LexiconError(ValueError):
    """Malformed or inconsistent lexicon. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class SemanticTree:
    root: str
    synonym_edges: dict[str, str] = field(default_factory=dict)
    compound_edges: dict[tuple[str, ...], str] = field(default_factory=dict)
    terminal_edges: dict[str, str] = field(default_factory=dict)

    def tokens(self) -> set[str]:
        out = {self.root}
        out.update(self.synonym_edges)
        out.update(self.synonym_edges.values())
        for parts, result in self.compound_edges.items():
            out.update(parts)
            out.add(result)
        out.update(self.terminal_edges)
        return out


@dataclass
class BagOfWords:
    counts: dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def __eq__(self, other):
        if isinstance(other, dict):
            return self.counts == other
        if isinstance(other, BagOfWords):
            return self.counts == other.counts
        return NotImplemented


class SemanticLexicon:
    """Validated, immutable-by-convention collection of semantic trees."""

    def __init__(self, trees, stem_rules=DEFAULT_STEM_RULES, max_ngram: int = 3):
        self.trees: tuple[SemanticTree, ...] = tuple(trees)
        self.stem_rules = tuple(stem_rules)
        self.max_ngram = max_ngram
        self._synonyms: dict[str, str] = {}
        self._compounds: dict[tuple[str, ...], str] = {}
        self._terminals: dict[str, str] = {}
        self._roots: list[str] = []
        self._known: set[str] = set()
        self._build()

    def _build(self):
        seen_roots = set()
        for tree in self.trees:
            for tok in tree.tokens():
                if not tok or not _VALID_TOKEN_RE.match(tok):
                    raise LexiconError(f"token {tok!r} must be lowercase without whitespace")
            if tree.root in seen_roots:
                raise LexiconError(f"duplicate root {tree.root!r}")
            seen_roots.add(tree.root)
            self._roots.append(tree.root)
            for src, dst in tree.synonym_edges.items():
                if self._synonyms.get(src, dst) != dst:
                    raise LexiconError(f"token {src!r} maps to both {self._synonyms[src]!r} and {dst!r}")
                self._synonyms[src] = dst
            for parts, dst in tree.compound_edges.items():
                if not 2 <= len(parts) <= self.max_ngram:
                    raise LexiconError(f"compound {parts!r} must have 2..{self.max_ngram} parts")
                if self._compounds.get(parts, dst) != dst:
                    raise LexiconError(f"compound {parts!r} maps to two results")
                self._compounds[parts] = dst
            for src, dst in tree.terminal_edges.items():
                if dst != tree.root:
                    raise LexiconError(f"terminal {src!r} must point at its own root {tree.root!r}")
                if self._terminals.get(src, dst) != dst:
                    raise LexiconError(f"token {src!r} terminates at two roots")
                self._terminals[src] = dst
            self._known |= tree.tokens()
        for root in self._roots:
            if root in self._synonyms or root in self._terminals:
                raise LexiconError(f"root {root!r} may not have outgoing edges")
        graph: dict[str, set[str]] = {}
        for src, dst in self._synonyms.items():
            graph.setdefault(dst, set()).add(src)
        for parts, dst in self._compounds.items():
            for part in parts:
                graph.setdefault(dst, set()).add(part)
        try:
            tuple(graphlib.TopologicalSorter(graph).static_order())
        except graphlib.CycleError as exc:
            raise LexiconError(f"cycle in lexicon edges: {' -> '.join(exc.args[1])}") from None

    @property
    def vocab(self) -> list[str]:
        return list(self._roots)

    def is_known(self, token: str) -> bool:
        return token in self._known

    def normalize(self, token: str) -> str:
        if token in self._known:
            return token
        return stem(token, self.stem_rules)

    def resolve(self, token: str) -> str:
        # acyclicity is checked at construction, so this terminates
        while token in self._synonyms:
            token = self._synonyms[token]
        return token

    def root_of(self, token: str) -> str | None:
        token = self.resolve(token)
        if token in self._terminals:
            return self._terminals[token]
        if token in self._roots:
            return token
        return None

    def compound(self, parts: tuple[str, ...]) -> str | None:
        return self._compounds.get(parts)


def stem(token: str, rules=DEFAULT_STEM_RULES) -> str:
    for suffix, replacement in rules:
        if not token.endswith(suffix):
            continue
        base = token[: len(token) - len(suffix)]
        if len(base) >= 2 and len(base) + len(replacement) >= MIN_STEM:
            return base + replacement
    return token


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def resolve_tokens(text: str, lexicon: SemanticLexicon) -> list[str]:
    """Tokens after normalisation, synonym resolution and compounding."""
    toks = [lexicon.resolve(lexicon.normalize(t)) for t in tokenize(text)]
    out = []
    i = 0
    while i < len(toks):
        for n in range(min(lexicon.max_ngram, len(toks) - i), 1, -1):
            result = lexicon.compound(tuple(toks[i:i + n]))
            if result is not None:
                out.append(lexicon.resolve(result))
                i += n
                break
        else:
            out.append(toks[i])
            i += 1
    return out


def extract_keyphrases(text: str, lexicon: SemanticLexicon) -> BagOfWords:
    counts = Counter()
    for tok in resolve_tokens(text, lexicon):
        root = lexicon.root_of(tok)
        if root is not None:
            counts[root] += 1
    return BagOfWords(dict(sorted(counts.items())))


# --------------------------------------------------------------------------
# corpus
# --------------------------------------------------------------------------

class Corpus:
    """Ordered firm documents over a fixed vocabulary."""

    def __init__(self, docs, vocab, empty_firms=()):
        self.docs: list[tuple[str, BagOfWords]] = list(docs)
        self.vocab: list[str] = list(vocab)
        self.empty_firms: list[str] = list(empty_firms)
        self._index = {w: i for i, w in enumerate(self.vocab)}
        if len(self._index) != len(self.vocab):
            raise ValueError("vocabulary has duplicate entries")
        ids = [fid for fid, _ in self.docs]
        dupes = sorted({f for f in ids if ids.count(f) > 1}) if len(set(ids)) != len(ids) else []
        if dupes:
            raise ValueError(f"duplicate firm_id: {dupes[0]}")
        for fid, bag in self.docs:
            unknown = [w for w in bag.counts if w not in self._index]
            if unknown:
                raise ValueError(f"firm {fid}: keyphrases not in vocabulary: {sorted(unknown)}")
        self._tokens = None

    @property
    def M(self) -> int:
        return len(self.docs)

    @property
    def V(self) -> int:
        return len(self.vocab)

    @property
    def firm_ids(self) -> list[str]:
        return [fid for fid, _ in self.docs]

    def word_index(self, word: str) -> int:
        return self._index[word]

    def tokens(self):
        """Flat ``(doc_ids, word_ids)`` int64 arrays, words in vocab order per doc."""
        if self._tokens is None:
            import numpy as np

            doc_ids, word_ids = [], []
            for d, (_, bag) in enumerate(self.docs):
                for w in sorted(bag.counts, key=self._index.__getitem__):
                    doc_ids.extend([d] * bag.counts[w])
                    word_ids.extend([self._index[w]] * bag.counts[w])
            self._tokens = (np.asarray(doc_ids, dtype=np.int64), np.asarray(word_ids, dtype=np.int64))
        return self._tokens

    def count_matrix(self):
        import numpy as np

        X = np.zeros((self.M, self.V), dtype=np.int64)
        for d, (_, bag) in enumerate(self.docs):
            for w, c in bag.counts.items():
                X[d, self._index[w]] = c
        return X

    def reindex(self, vocab) -> "Corpus":
        """Same documents over a superset vocabulary."""
        return Corpus(self.docs, vocab, self.empty_firms)


def build_corpus(docs, lexicon: SemanticLexicon) -> Corpus:
    seen = set()
    out, empty = [], []
    for firm_id, text in docs:
        if firm_id in seen:
            raise ValueError(f"duplicate firm_id: {firm_id}")
        seen.add(firm_id)
        bag = extract_keyphrases(text, lexicon)
        if bag.total == 0:
            log.warning("firm %s: no keyphrases extracted", firm_id)
            empty.append(firm_id)
        out.append((firm_id, bag))
    return Corpus(out, lexicon.vocab, empty)


def coverage_report(docs, lexicon: SemanticLexicon) -> dict:
    """Per-firm counts of raw tokens and emitted keyphrases."""
    rows = {}
    for firm_id, text in docs:
        raw = len(tokenize(text))
        kept = extract_keyphrases(text, lexicon).total
        rows[firm_id] = {"tokens": raw, "keyphrases": kept}
    return rows


# --------------------------------------------------------------------------
# lexicon file format
# --------------------------------------------------------------------------

def parse_lexicon(text: str, max_ngram: int = 3) -> SemanticLexicon:
    """Parse the block format (``root:``, ``syn:``, ``ngram:``, ``term:`` lines).

    Blocks are separated by blank lines; ``#`` starts a comment.
    """
    trees: list[SemanticTree] = []
    current: SemanticTree | None = None
    pending: list[tuple[int, str, str]] = []

    def close():
        nonlocal current
        if current is not None:
            trees.append(current)
        current = None

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            close()
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise LexiconError(f"expected '<kind>: ...', got {raw.strip()!r}", lineno)
        key, value = key.strip(), value.strip()
        if key == "root":
            if current is not None:
                raise LexiconError("second root in one block (separate trees with a blank line)", lineno)
            if not value or " " in value:
                raise LexiconError(f"bad root {value!r}", lineno)
            current = SemanticTree(value)
            continue
        if current is None:
            raise LexiconError(f"{key!r} line before any root", lineno)
        try:
            if key == "syn":
                src, dst = (s.strip() for s in _split_arrow(value))
                if src in current.synonym_edges and current.synonym_edges[src] != dst:
                    raise LexiconError(f"token {src!r} has two parents in tree {current.root!r}", lineno)
                current.synonym_edges[src] = dst
            elif key == "ngram":
                lhs, dst = _split_arrow(value)
                parts = tuple(p.strip() for p in lhs.split("+"))
                if len(parts) < 2 or not all(parts):
                    raise LexiconError(f"bad n-gram {value!r}", lineno)
                current.compound_edges[parts] = dst.strip()
            elif key == "term":
                current.terminal_edges[value] = current.root
            else:
                raise LexiconError(f"unknown line kind {key!r}", lineno)
        except LexiconError as exc:
            if exc.line is None:
                raise LexiconError(str(exc), lineno) from None
            raise
        pending.append((lineno, key, value))
    close()
    try:
        return SemanticLexicon(trees, max_ngram=max_ngram)
    except LexiconError as exc:
        # point validation errors at the first line that mentions the token
        named = set(re.findall(r"'([^']+)'", str(exc)))
        for lineno, _, value in pending:
            if named & set(_line_tokens(value)):
                raise LexiconError(str(exc), lineno) from None
        raise


def _line_tokens(value: str) -> list[str]:
    return [t for t in re.split(r"\s*(?:\+|->)\s*|\s+", value) if t]


def _split_arrow(value: str) -> tuple[str, str]:
    lhs, sep, rhs = value.partition("->")
    if not sep or not lhs.strip() or not rhs.strip():
        raise LexiconError(f"expected 'a -> b', got {value!r}")
    return lhs, rhs


def load_lexicon(path, max_ngram: int = 3) -> SemanticLexicon:
    return parse_lexicon(Path(path).read_text(encoding="utf-8"), max_ngram=max_ngram)


def demo_lexicon() -> SemanticLexicon:
    text = resources.files("mis2.data").joinpath("demo_lexicon.txt").read_text(encoding="utf-8")
    return parse_lexicon(text)
