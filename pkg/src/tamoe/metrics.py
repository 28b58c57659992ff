"""Corpus-level caption metrics: BLEU-1..4, ROUGE-L and CIDEr-D.

Candidates are strings (or token lists); references are lists of strings
per candidate. Strings are tokenized with :func:`tamoe.text.tokenize`.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from .text import tokenize

log = logging.getLogger(__name__)


def _toks(x):
    return tokenize(x) if isinstance(x, str) else list(x)


def _prepare(candidates, references):
    if len(candidates) == 0:
        raise ValueError("empty candidate set")
    if len(candidates) != len(references):
        raise ValueError("one reference list per candidate is required")
    cands = [_toks(c) for c in candidates]
    refs = []
    for r in references:
        if isinstance(r, str) or len(r) == 0:
            raise ValueError("each candidate needs a non-empty list of references")
        refs.append([_toks(x) for x in r])
    return cands, refs


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidates, references, n_max: int = 4, smooth: bool = False) -> list[float]:
    """Corpus BLEU-1..n_max with brevity penalty from the shortest reference."""
    cands, refs = _prepare(candidates, references)
    matched = np.zeros(n_max)
    total = np.zeros(n_max)
    c_len = r_len = 0
    for cand, rs in zip(cands, refs):
        c_len += len(cand)
        r_len += min(len(r) for r in rs)
        for n in range(1, n_max + 1):
            cc = ngrams(cand, n)
            best = Counter()
            for r in rs:
                for g, k in ngrams(r, n).items():
                    best[g] = max(best[g], k)
            matched[n - 1] += sum(min(k, best[g]) for g, k in cc.items())
            total[n - 1] += max(len(cand) - n + 1, 0)
    if c_len == 0:
        return [0.0] * n_max
    bp = min(1.0, math.exp(1.0 - r_len / c_len))
    scores, logsum = [], 0.0
    for n in range(n_max):
        m, t = matched[n], total[n]
        if smooth and n > 0:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            # zero precision at order n zeroes every higher order too
            scores += [0.0] * (n_max - n)
            break
        logsum += math.log(m / t)
        scores.append(bp * math.exp(logsum / (n + 1)))
    return scores


def lcs_length(a, b) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_scores(candidates, references, beta: float = 1.2) -> np.ndarray:
    cands, refs = _prepare(candidates, references)
    out = np.zeros(len(cands))
    for i, (cand, rs) in enumerate(zip(cands, refs)):
        if not cand:
            continue
        precs, recs = [], []
        for r in rs:
            lcs = lcs_length(cand, r)
            precs.append(lcs / len(cand))
            recs.append(lcs / len(r) if r else 0.0)
        p, r = max(precs), max(recs)
        if p > 0 and r > 0:
            out[i] = (1 + beta ** 2) * p * r / (r + beta ** 2 * p)
    return out


def rouge_l(candidates, references, beta: float = 1.2) -> float:
    """ROUGE-L F-measure; best precision and recall over references, corpus mean."""
    return float(np.mean(rouge_l_scores(candidates, references, beta)))


def cider_scores(candidates, references, n_max: int = 4, sigma: float = 6.0,
                 variant: str = "cider-d") -> np.ndarray:
    """Per-image, per-n CIDEr scores, shape (images, n_max), already x10.

    Document frequencies come from the references of this corpus, counted
    once per image. ``variant="cider"`` drops clipping and the length penalty.
    """
    if variant not in ("cider-d", "cider"):
        raise ValueError(f"unknown CIDEr variant {variant!r}")
    cands, refs = _prepare(candidates, references)
    n_img = len(cands)
    if n_img < 2:
        log.warning("CIDEr over a single image: every IDF is zero")
    df = Counter()
    for rs in refs:
        seen = set()
        for r in rs:
            for n in range(1, n_max + 1):
                seen.update(ngrams(r, n))
        df.update(seen)
    log_n = math.log(float(n_img))

    def vec(tokens):
        v, norms = [], []
        for n in range(1, n_max + 1):
            d = {g: k * (log_n - math.log(max(1.0, df[g]))) for g, k in ngrams(tokens, n).items()}
            v.append(d)
            norms.append(math.sqrt(sum(x * x for x in d.values())))
        return v, norms, len(tokens)

    out = np.zeros((n_img, n_max))
    for i, (cand, rs) in enumerate(zip(cands, refs)):
        vh, nh, lh = vec(cand)
        acc = np.zeros(n_max)
        for r in rs:
            vr, nr, lr = vec(r)
            penalty = math.exp(-((lh - lr) ** 2) / (2 * sigma ** 2)) if variant == "cider-d" else 1.0
            for n in range(n_max):
                if variant == "cider-d":
                    val = sum(min(x, vr[n].get(g, 0.0)) * vr[n].get(g, 0.0) for g, x in vh[n].items())
                else:
                    val = sum(x * vr[n].get(g, 0.0) for g, x in vh[n].items())
                if nh[n] != 0 and nr[n] != 0:
                    val /= nh[n] * nr[n]
                acc[n] += val * penalty
        out[i] = acc / len(rs) * 10.0
    return out


def cider(candidates, references, n_max: int = 4, sigma: float = 6.0,
          variant: str = "cider-d"):
    """Corpus CIDEr-D: ``(mean over n, [CIDEr-1, ..., CIDEr-n_max])``."""
    per = cider_scores(candidates, references, n_max, sigma, variant).mean(0)
    return float(per.mean()), [float(x) for x in per]


@dataclass
class MetricReport:
    bleu: list = field(default_factory=lambda: [0.0] * 4)
    rouge_l: float = 0.0
    cider: float = 0.0
    cider_n: list = field(default_factory=lambda: [0.0] * 4)
    per_activity: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def evaluate(candidates, references, labels=None, smooth_bleu: bool = False) -> MetricReport:
    """All metrics at once; ``labels`` adds a per-activity CIDEr-D breakdown."""
    per_image = cider_scores(candidates, references)
    per_n = per_image.mean(0)
    report = MetricReport(
        bleu=bleu(candidates, references, smooth=smooth_bleu),
        rouge_l=rouge_l(candidates, references),
        cider=float(per_n.mean()),
        cider_n=[float(x) for x in per_n],
    )
    if labels is not None:
        groups = defaultdict(list)
        for lab, row in zip(labels, per_image):
            groups[lab].append(row.mean())
        report.per_activity = {lab: float(np.mean(v)) for lab, v in sorted(groups.items())}
    return report


def write_score_report(path, reports: dict):
    """Dump ``{name: MetricReport}`` as indented JSON."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump({k: (v.to_dict() if isinstance(v, MetricReport) else v)
                   for k, v in reports.items()}, f, indent=2, sort_keys=True)
        f.write("\n")
