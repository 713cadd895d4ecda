import logging

import pytest
from hypothesis import given, settings, strategies as st

from mis2.textprep import (BagOfWords, Corpus, LexiconError, SemanticLexicon, SemanticTree, build_corpus,
                           coverage_report, demo_lexicon, extract_keyphrases, parse_lexicon, resolve_tokens,
                           stem, tokenize)

SMALL = """
root: ecommerce
syn: internet -> online
ngram: online + retail -> online-retail
term: online-retail

root: retail
syn: shopping -> retail
syn: marketplace -> retail
"""


@pytest.fixture(scope="module")
def lex():
    return demo_lexicon()


def test_tokenize_lowercases_and_splits():
    assert tokenize("E-Commerce, Cloud2 computing!") == ["e", "commerce", "cloud2", "computing"]
    assert tokenize("") == []


@pytest.mark.parametrize("word, expected", [
    ("retailer", "retail"), ("retailers", "retail"), ("milling", "mill"), ("automation", "automate"),
    ("classes", "class"), ("boxes", "box"), ("stores", "store"), ("gas", "gas"), ("ring", "ring"),
])
def test_stem(word, expected):
    assert stem(word) == expected


def test_known_raw_tokens_skip_stemming(lex):
    # "shopping" is a synonym source in the lexicon, so it must not become "shopp"
    assert lex.normalize("shopping") == "shopping"
    assert lex.normalize("retailers") == "retail"


def test_figure_paths(lex):
    assert extract_keyphrases("e commerce", lex) == {"ecommerce": 1}
    assert extract_keyphrases("internet retailer", lex) == {"ecommerce": 1}
    assert extract_keyphrases("marketplace", lex) == {"retail": 1}
    assert extract_keyphrases("shopping", lex) == {"retail": 1}


def test_unmapped_tokens_dropped(lex):
    assert extract_keyphrases("the quick brown fox", lex) == {}
    assert extract_keyphrases("", lex) == {}


def test_compounds_longest_first():
    text = """
root: x
ngram: a + b -> ab
ngram: a + b + c -> abc
term: ab
term: abc
"""
    lex = parse_lexicon(text)
    assert resolve_tokens("a b c", lex) == ["abc"]
    assert resolve_tokens("a b d", lex) == ["ab", "d"]
    assert extract_keyphrases("a b c a b", lex) == {"x": 2}


def test_compound_after_synonym():
    lex = parse_lexicon(SMALL)
    assert extract_keyphrases("internet retail and a marketplace", lex) == {"ecommerce": 1, "retail": 1}


def test_bag_counts_and_total(lex):
    bag = extract_keyphrases("shopping, shopping, and online shopping", lex)
    assert bag == {"ecommerce": 1, "retail": 2}
    assert bag.total == 3


@pytest.mark.parametrize("text, line", [
    ("root: a\nsyn: b\n", 2),
    ("syn: b -> a\n", 1),
    ("root: a\nroot: b\n", 2),
    ("root: a\nbogus: x\n", 2),
    ("root: a\nngram: b -> a\n", 2),
    ("# comment\nroot: a\nsyn: x -> a\nsyn: x -> b\n", 4),
])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(LexiconError) as err:
        parse_lexicon(text)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_cycle_rejected():
    with pytest.raises(LexiconError, match="cycle"):
        parse_lexicon("root: r\nsyn: a -> b\nsyn: b -> a\n")


def test_conflicting_synonyms_across_trees():
    with pytest.raises(LexiconError, match="maps to both"):
        parse_lexicon("root: r\nsyn: a -> r\n\nroot: s\nsyn: a -> s\n")


def test_duplicate_root_and_root_edges():
    with pytest.raises(LexiconError, match="duplicate root"):
        SemanticLexicon([SemanticTree("r"), SemanticTree("r")])
    with pytest.raises(LexiconError, match="outgoing"):
        parse_lexicon("root: r\n\nroot: s\nsyn: r -> s\n")


def test_uppercase_token_rejected():
    with pytest.raises(LexiconError, match="lowercase"):
        SemanticLexicon([SemanticTree("Retail")])


def test_demo_lexicon_vocab(lex):
    assert "ecommerce" in lex.vocab and "retail" in lex.vocab
    assert len(lex.vocab) == len(set(lex.vocab))


def test_build_corpus_flags_empty_docs(lex, caplog):
    with caplog.at_level(logging.WARNING):
        corpus = build_corpus([("a", "cloud computing and streaming"), ("b", "nothing here")], lex)
    assert corpus.empty_firms == ["b"]
    assert "firm b" in caplog.text
    assert corpus.M == 2 and corpus.V == len(lex.vocab)
    doc_ids, word_ids = corpus.tokens()
    assert doc_ids.tolist() == [0, 0]
    assert sorted(corpus.vocab[w] for w in word_ids) == ["cloud", "streaming"]


def test_corpus_validation():
    with pytest.raises(ValueError, match="duplicate"):
        Corpus([("a", BagOfWords({})), ("a", BagOfWords({}))], ["x"])
    with pytest.raises(ValueError):
        Corpus([("a", BagOfWords({"y": 1}))], ["x"])


def test_count_matrix_and_reindex():
    c = Corpus([("a", BagOfWords({"x": 2})), ("b", BagOfWords({"y": 1, "x": 1}))], ["x", "y"])
    assert c.count_matrix().tolist() == [[2, 0], [1, 1]]
    r = c.reindex(["x", "y", "z"])
    assert r.count_matrix().tolist() == [[2, 0, 0], [1, 1, 0]]


def test_coverage_report(lex):
    rows = coverage_report([("a", "cloud computing for retailers")], lex)
    assert rows == {"a": {"tokens": 4, "keyphrases": 2}}


words = st.sampled_from(["e", "commerce", "internet", "retailer", "shopping", "cloud", "computing",
                         "the", "store", "online", "movie", "robots", "banking", "xyz"])


@settings(max_examples=200, deadline=None)
@given(st.lists(words, max_size=25))
def test_extraction_properties(tokens):
    lex = demo_lexicon()
    text = " ".join(tokens)
    bag = extract_keyphrases(text, lex)
    assert set(bag.counts) <= set(lex.vocab)
    assert bag.total <= len(tokens)
    assert all(c > 0 for c in bag.counts.values())
    assert extract_keyphrases(text.upper(), lex) == bag
