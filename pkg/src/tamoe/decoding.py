"""Greedy and beam-search caption generation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .model import DropoutMaskSet
from .numerics import log_softmax
from .text import BOS_ID, EOS_ID, PAD_ID, UNK_ID

BANNED = (PAD_ID, BOS_ID, UNK_ID)


@dataclass
class Hypothesis:
    tokens: list = field(default_factory=list)  # excludes BOS; EOS kept if finished
    log_prob: float = 0.0
    finished: bool = False
    state: tuple | None = None

    @property
    def words(self):
        return self.tokens[:-1] if self.finished else self.tokens

    def score(self, length_norm: bool = False):
        if length_norm:
            return self.log_prob / max(len(self.tokens), 1)
        return self.log_prob


def _masked_log_probs(logits):
    logits = logits.copy()
    logits[:, list(BANNED)] = -np.inf
    return log_softmax(logits, axis=1)


def greedy_decode_batch(model, features, lengths, topics, max_len=None):
    """Argmax decoding for a batch; returns one token list (no EOS) per row."""
    max_len = model.config.max_len if max_len is None else max_len
    ctx = model.start(features, lengths, topics)
    n = ctx["n"]
    E = model.embedding_matrix()
    masks = DropoutMaskSet.ones(model.config, n)
    state = model.initial_state(n)
    tok = np.full(n, BOS_ID)
    done = np.zeros(n, dtype=bool)
    out = [[] for _ in range(n)]
    for _ in range(max_len):
        logits, state, _ = model.step(ctx, tok, state, masks, E=E)
        logits[:, list(BANNED)] = -np.inf
        tok = logits.argmax(1)
        for i in np.flatnonzero(~done):
            if tok[i] == EOS_ID:
                done[i] = True
            else:
                out[i].append(int(tok[i]))
        if done.all():
            break
    return out


def greedy_decode(model, features, topic, max_len=None):
    return greedy_decode_batch(model, np.asarray(features)[None], None,
                               np.asarray(topic)[None], max_len)[0]


def beam_search(model, features, topic, beam_size: int = 5, max_len=None,
                length_norm: bool = False) -> list[Hypothesis]:
    """Beam search over log-probabilities for a single video.

    Candidates ending in EOS leave the beam and compete at the end on total
    log-probability. Ties prefer the smaller token id. Returns up to
    ``beam_size`` finished hypotheses, padded with unfinished ones.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    max_len = model.config.max_len if max_len is None else max_len
    ctx = model.start(np.asarray(features)[None], None, np.asarray(topic)[None])
    E = model.embedding_matrix()
    h, c = model.initial_state(1)
    live = [Hypothesis()]
    finished = []
    for _ in range(max_len):
        n = len(live)
        tok = np.array([hyp.tokens[-1] if hyp.tokens else BOS_ID for hyp in live])
        masks = DropoutMaskSet.ones(model.config, n)
        logits, (h, c), _ = model.step(ctx, tok, (h, c), masks, rows=np.zeros(n, dtype=int), E=E)
        logp = _masked_log_probs(logits)
        base = np.array([hyp.log_prob for hyp in live])
        scores = base[:, None] + logp
        parent, token = np.nonzero(np.isfinite(scores))
        cand = scores[parent, token]
        order = np.lexsort((parent, token, -cand))[:beam_size]
        new_live, keep = [], []
        for k in order:
            p, w = int(parent[k]), int(token[k])
            hyp = Hypothesis(live[p].tokens + [w], float(cand[k]), w == EOS_ID)
            if hyp.finished:
                finished.append(hyp)
            else:
                new_live.append(hyp)
                keep.append(p)
        if not new_live:
            live = []
            break
        live = new_live
        h, c = h[keep], c[keep]
    for i, hyp in enumerate(live):
        hyp.state = (h[i], c[i])
    key = lambda hyp: (-hyp.score(length_norm), hyp.tokens)  # noqa: E731
    ranked = sorted(finished, key=key)[:beam_size]
    if len(ranked) < beam_size:
        ranked += sorted(live, key=key)[:beam_size - len(ranked)]
    return ranked


def score_tokens(model, features, topic, tokens) -> float:
    """Log-probability of ``tokens`` under masked decoding, one step at a time."""
    ctx = model.start(np.asarray(features)[None], None, np.asarray(topic)[None])
    E = model.embedding_matrix()
    state = model.initial_state(1)
    masks = DropoutMaskSet.ones(model.config, 1)
    prev, total = BOS_ID, 0.0
    for w in tokens:
        logits, state, _ = model.step(ctx, np.array([prev]), state, masks, E=E)
        total += float(_masked_log_probs(logits)[0, w])
        prev = w
    return total


def write_decodes(path, records):
    """Write ``{video_id, caption, log_prob}`` JSON lines."""
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps({"video_id": rec["video_id"], "caption": rec["caption"],
                                "log_prob": rec.get("log_prob")}) + "\n")


def read_decodes(path):
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
