"""Per-activity topic embeddings from external text documents.

A label's documents are pooled into one pseudo-document. Each distinct
unigram gets a weight (term frequency within the label's documents times
the log inverse fraction of labels whose documents contain it); the
weighted sum of word vectors is concatenated with the mean vector of the
label's own words.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter

import numpy as np

from .text import tokenize

log = logging.getLogger(__name__)


class DocumentlessLabelError(ValueError):
    """The label has no documents to weight."""


class TopicCorpus:
    """Label -> documents (token lists), with per-label unigram counts."""

    def __init__(self, documents: dict):
        self.documents = {y: [list(d) for d in docs] for y, docs in documents.items()}
        self.counts = {}
        for y, docs in self.documents.items():
            c = Counter()
            for d in docs:
                c.update(d)
            self.counts[y] = c
        self.documentless = sorted(y for y, docs in self.documents.items() if not any(docs))
        for y in self.documentless:
            log.warning("label %r has no documents", y)
        # number of labels whose documents contain each token
        self.label_freq = Counter()
        for c in self.counts.values():
            self.label_freq.update(c.keys())

    @property
    def labels(self):
        return list(self.documents)

    def __contains__(self, label):
        return label in self.documents

    @classmethod
    def from_texts(cls, texts: dict):
        return cls({y: [tokenize(t) for t in docs] for y, docs in texts.items()})

    def tokens(self):
        for docs in self.documents.values():
            yield from docs


def read_topic_corpus(path) -> tuple[TopicCorpus, dict]:
    """Read a JSON-lines file of ``{"label": ..., "documents": [...]}`` records.

    Returns the tokenized corpus and the raw texts.
    """
    texts = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if "label" not in rec or "documents" not in rec:
                raise ValueError(f"{path}:{lineno}: record needs 'label' and 'documents'")
            texts.setdefault(rec["label"], []).extend(rec["documents"])
    return TopicCorpus.from_texts(texts), texts


def write_topic_corpus(path, texts: dict):
    with open(path, "w", encoding="utf-8") as f:
        for label, docs in texts.items():
            f.write(json.dumps({"label": label, "documents": list(docs)}) + "\n")


def tfidf_weight(corpus: TopicCorpus, token: str, label) -> float:
    if label not in corpus:
        raise KeyError(f"unknown label {label!r}")
    counts = corpus.counts[label]
    z = counts.get(token, 0)
    if z == 0:
        return 0.0
    total = sum(counts.values())
    return z / total * math.log(len(corpus.documents) / corpus.label_freq[token])


def tfidf_weights(corpus: TopicCorpus, label) -> dict[str, float]:
    """Weights of every distinct unigram in the label's documents."""
    counts = corpus.counts[label]
    total = sum(counts.values())
    n_labels = len(corpus.documents)
    return {
        tok: z / total * math.log(n_labels / corpus.label_freq[tok])
        for tok, z in counts.items()
    }


def tfidf_embedding(corpus: TopicCorpus, label, table: np.ndarray, vocab) -> np.ndarray:
    """Weighted sum of word vectors over the label's distinct unigrams."""
    if label not in corpus:
        raise KeyError(f"unknown label {label!r}")
    if label in corpus.documentless:
        raise DocumentlessLabelError(f"label {label!r} has no documents")
    out = np.zeros(table.shape[1])
    # sorted for a reproducible summation order
    for tok, g in sorted(tfidf_weights(corpus, label).items()):
        if g != 0.0:
            out += g * table[vocab.id(tok)]
    return out


def topic_embedding(label: str, corpus: TopicCorpus, table: np.ndarray, vocab,
                    parts: str = "both") -> np.ndarray:
    """``[mean label-word vector ; TF-IDF embedding]``, length ``2 * D``.

    ``parts`` selects which halves are kept (``both``, ``label``, ``tfidf``
    or ``none``); dropped halves are zero.
    """
    words = tokenize(label)
    if not words:
        raise ValueError("empty activity label")
    if parts not in ("both", "label", "tfidf", "none"):
        raise ValueError(f"unknown topic parts {parts!r}")
    dim = table.shape[1]
    avg = np.mean([table[vocab.id(w)] for w in words], axis=0)
    if label in corpus and label not in corpus.documentless:
        tfidf = tfidf_embedding(corpus, label, table, vocab)
    else:
        log.warning("no documents for label %r; TF-IDF half set to zero", label)
        tfidf = np.zeros(dim)
    if parts in ("tfidf", "none"):
        avg = np.zeros(dim)
    if parts in ("label", "none"):
        tfidf = np.zeros(dim)
    return np.concatenate([avg, tfidf])


def top_k_words(corpus: TopicCorpus, label, k: int) -> list[str]:
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(tfidf_weights(corpus, label).items(), key=lambda kv: (-kv[1], kv[0]))
    return [t for t, _ in ranked[:k]]
