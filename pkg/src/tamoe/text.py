"""Tokenization, vocabulary construction and word-vector loading."""

from __future__ import annotations

import hashlib
import unicodedata
from collections import Counter
from dataclasses import dataclass

import numpy as np

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
RESERVED = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3


class EmbeddingFormatError(ValueError):
    """Malformed word-vector file."""


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P") or unicodedata.category(ch).startswith("S")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip punctuation at token edges."""
    out = []
    for raw in text.lower().split():
        start, end = 0, len(raw)
        while start < end and _is_punct(raw[start]):
            start += 1
        while end > start and _is_punct(raw[end - 1]):
            end -= 1
        if start < end:
            out.append(raw[start:end])
    return out


class Vocabulary:
    """Token <-> id table with ids 0..3 reserved for PAD, BOS, EOS, UNK."""

    def __init__(self, tokens):
        self.itos = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def token(self, i: int) -> str:
        return self.itos[i]

    def encode(self, tokens) -> list[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids, strip_special: bool = True) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if i == EOS_ID and strip_special:
                break
            if strip_special and i < len(RESERVED):
                continue
            out.append(self.itos[i] if 0 <= i < len(self.itos) else UNK)
        return out

    def digest(self) -> bytes:
        """SHA-256 of the ordered token list; ties checkpoints to a vocabulary."""
        return hashlib.sha256("\n".join(self.itos).encode("utf-8")).digest()

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for t in self.itos[len(RESERVED):]:
                f.write(t + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls([line.rstrip("\n") for line in f if line.strip()])


def build_vocab(corpora, min_count: int = 1) -> Vocabulary:
    """Build a vocabulary over every token sequence in ``corpora``.

    ``corpora`` is a list of corpora, each an iterable of token sequences.
    Ids are assigned by descending count, ties broken lexicographically.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter()
    for corpus in corpora:
        for seq in corpus:
            counts.update(seq)
    kept = [t for t, c in counts.items() if c >= min_count and t not in RESERVED]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


@dataclass
class EmbeddingTable:
    matrix: np.ndarray
    frozen: bool
    coverage: float
    missing: list

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def read_word_vectors(path, dim: int | None = None) -> dict[str, np.ndarray]:
    """Parse a word-vector text file (optional ``<count> <dim>`` header)."""
    vectors = {}
    declared = dim
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            fields = line.rstrip("\n").rstrip(" ").split(" ")
            if fields == [""]:
                continue
            if lineno == 1 and len(fields) == 2:
                try:
                    _, hdim = int(fields[0]), int(fields[1])
                except ValueError:
                    pass
                else:
                    if declared is not None and hdim != declared:
                        raise EmbeddingFormatError(
                            f"header declares dimension {hdim}, expected {declared}"
                        )
                    declared = hdim
                    continue
            if len(fields) < 2:
                raise EmbeddingFormatError(f"line {lineno}: expected a token and a vector")
            if declared is None:
                declared = len(fields) - 1
            if len(fields) - 1 != declared:
                raise EmbeddingFormatError(
                    f"line {lineno}: wrong field count {len(fields)}, expected {declared + 1}"
                )
            try:
                vec = np.array([float(v) for v in fields[1:]])
            except ValueError as exc:
                raise EmbeddingFormatError(f"line {lineno}: {exc}") from None
            vectors[fields[0]] = vec
    return vectors


def write_word_vectors(path, vectors: dict, header: bool = True):
    dim = len(next(iter(vectors.values())))
    with open(path, "w", encoding="utf-8") as f:
        if header:
            f.write(f"{len(vectors)} {dim}\n")
        for tok, vec in vectors.items():
            f.write(tok + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def load_embeddings(path, vocab: Vocabulary, mode: str = "pretrained-frozen",
                    dim: int | None = None, rng=None, init_scale: float = 0.1) -> EmbeddingTable:
    """Fill a |V| x D table from a word-vector file.

    ``mode`` is ``"pretrained-frozen"`` or ``"task-specific"``. Rows not
    covered by the file (and every row in task-specific mode) are drawn from
    uniform[-init_scale, init_scale]; the PAD row is zero.
    """
    if mode not in ("pretrained-frozen", "task-specific"):
        raise ValueError(f"unknown embedding mode {mode!r}")
    rng = rng if rng is not None else np.random.default_rng(0)
    vectors = read_word_vectors(path, dim) if path is not None else {}
    if dim is None:
        if not vectors:
            raise EmbeddingFormatError("cannot infer dimension from an empty vector file")
        dim = len(next(iter(vectors.values())))
    matrix = rng.uniform(-init_scale, init_scale, size=(len(vocab), dim))
    words = vocab.itos[len(RESERVED):]
    hits = [t for t in words if t in vectors]
    missing = [t for t in words if t not in vectors]
    if mode == "pretrained-frozen":
        for t in hits:
            matrix[vocab.stoi[t]] = vectors[t]
    matrix[PAD_ID] = 0.0
    coverage = len(hits) / len(words) if words else 1.0
    return EmbeddingTable(matrix, mode == "pretrained-frozen", coverage, missing)
