import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_tfidf, brute_tfidf_embedding
from tamoe.text import Vocabulary
from tamoe.topic import (
    DocumentlessLabelError,
    TopicCorpus,
    read_topic_corpus,
    tfidf_embedding,
    tfidf_weight,
    tfidf_weights,
    top_k_words,
    topic_embedding,
    write_topic_corpus,
)


def _setup(docs, dim=3, seed=0):
    corpus = TopicCorpus(docs)
    toks = sorted({t for ds in docs.values() for d in ds for t in d}
                  | {w for y in docs for w in y.split()})
    vocab = Vocabulary(toks)
    table = np.random.default_rng(seed).normal(size=(len(vocab), dim))
    return corpus, vocab, table


def test_hand_weight():
    c = TopicCorpus({"A": [["knife", "knife", "stone"]], "B": [["ball"]]})
    assert tfidf_weight(c, "knife", "A") == pytest.approx(2 / 3 * math.log(2), abs=1e-12)
    assert tfidf_weight(c, "knife", "A") == pytest.approx(0.4621, abs=1e-4)
    assert tfidf_weight(c, "ball", "A") == 0.0


def test_corpus_wide_token_weight_exactly_zero():
    c = TopicCorpus({"A": [["the", "x"]], "B": [["the", "y"]], "C": [["z", "the"]]})
    for y in "ABC":
        assert tfidf_weight(c, "the", y) == 0.0


def test_all_zero_weights_give_zero_vector():
    c, v, t = _setup({"A": [["a", "b"]], "B": [["b", "a"]]})
    np.testing.assert_array_equal(tfidf_embedding(c, "A", t, v), 0.0)


def test_single_distinct_token():
    docs = {"A": [["a", "a"]], "B": [["b"]]}
    c, v, t = _setup(docs)
    np.testing.assert_allclose(tfidf_embedding(c, "A", t, v), math.log(2) * t[v.id("a")],
                               rtol=0, atol=1e-15)


corpora = st.dictionaries(
    st.sampled_from(list("ABCDEFGHIJ")),
    st.lists(st.lists(st.sampled_from(list("pqrstuvwxyz")), min_size=1, max_size=8),
             min_size=1, max_size=3),
    min_size=1, max_size=6)


@settings(max_examples=60, deadline=None)
@given(corpora)
def test_matches_brute_force(docs):
    c, v, t = _setup(docs)
    rows = {tok: t[v.id(tok)] for tok in v.itos}
    for y in docs:
        for tok in {x for d in docs[y] for x in d} | {"nope"}:
            assert abs(tfidf_weight(c, tok, y) - brute_tfidf(docs, tok, y)) < 1e-12
        np.testing.assert_allclose(tfidf_embedding(c, y, t, v),
                                   brute_tfidf_embedding(docs, y, rows), rtol=0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(corpora)
def test_term_frequencies_sum_to_one(docs):
    c = TopicCorpus(docs)
    for y in docs:
        total = sum(c.counts[y].values())
        assert sum(z / total for z in c.counts[y].values()) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(corpora)
def test_duplicating_documents_leaves_embedding_unchanged(docs):
    c, v, t = _setup(docs)
    doubled = TopicCorpus({y: ds + ds for y, ds in docs.items()})
    for y in docs:
        np.testing.assert_allclose(tfidf_embedding(doubled, y, t, v), tfidf_embedding(c, y, t, v),
                                   atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(corpora, st.floats(-3, 3))
def test_linear_in_table(docs, scale):
    c, v, t = _setup(docs)
    for y in docs:
        np.testing.assert_allclose(tfidf_embedding(c, y, scale * t, v),
                                   scale * tfidf_embedding(c, y, t, v), atol=1e-12)


def test_topic_embedding_halves():
    docs = {"arm wrestling": [["arm", "table", "arm"]], "cooking": [["pan", "table"]]}
    c, v, t = _setup(docs)
    e = topic_embedding("arm wrestling", c, t, v)
    assert e.shape == (6,)
    np.testing.assert_allclose(e[:3], (t[v.id("arm")] + t[v.id("wrestling")]) / 2)
    np.testing.assert_allclose(e[3:], tfidf_embedding(c, "arm wrestling", t, v))
    np.testing.assert_array_equal(topic_embedding("arm wrestling", c, t, v, parts="label")[3:], 0)
    np.testing.assert_array_equal(topic_embedding("arm wrestling", c, t, v, parts="tfidf")[:3], 0)
    np.testing.assert_array_equal(topic_embedding("arm wrestling", c, t, v, parts="none"), 0)


def test_topic_embedding_dim_600():
    docs = {"x": [["a"]], "y": [["b"]]}
    c, v, _ = _setup(docs)
    t = np.ones((len(v), 300))
    assert topic_embedding("x", c, t, v).shape == (600,)


def test_documentless_label_fallback(caplog):
    docs = {"fencing": [], "cooking": [["pan"]]}
    with caplog.at_level(logging.WARNING):
        c, v, t = _setup(docs)
        e = topic_embedding("fencing", c, t, v)
    np.testing.assert_array_equal(e[3:], 0.0)
    np.testing.assert_allclose(e[:3], t[v.id("fencing")])
    assert any("fencing" in r.getMessage() for r in caplog.records)
    with pytest.raises(DocumentlessLabelError):
        tfidf_embedding(c, "fencing", t, v)


def test_empty_label_rejected():
    c, v, t = _setup({"a": [["x"]]})
    with pytest.raises(ValueError):
        topic_embedding("  ", c, t, v)


def test_top_k():
    c = TopicCorpus({"sharpening": [["stone", "knife", "the", "knife", "blade"]],
                     "ball": [["the", "ball"]], "cook": [["the", "pan", "blade"]]})
    assert top_k_words(c, "sharpening", 2) == ["knife", "stone"]
    assert top_k_words(c, "sharpening", 10) == ["knife", "stone", "blade", "the"]
    with pytest.raises(ValueError):
        top_k_words(c, "ball", 0)


@settings(max_examples=30, deadline=None)
@given(corpora, st.integers(1, 5))
def test_top_k_matches_sorted_weights(docs, k):
    c = TopicCorpus(docs)
    for y in docs:
        ranked = sorted({t for d in docs[y] for t in d},
                        key=lambda t: (-brute_tfidf(docs, t, y), t))
        got = top_k_words(c, y, k)
        assert got == ranked[:k] or all(
            abs(tfidf_weights(c, y)[a] - brute_tfidf(docs, b, y)) < 1e-12 for a, b in zip(got, ranked))


def test_corpus_file_round_trip(tmp_path):
    texts = {"juggling balls": ["Juggling is fun.", "Three balls!"], "x": []}
    write_topic_corpus(tmp_path / "t.jsonl", texts)
    c, raw = read_topic_corpus(tmp_path / "t.jsonl")
    assert raw == texts
    assert c.documents["juggling balls"][1] == ["three", "balls"]
    assert c.documentless == ["x"]
