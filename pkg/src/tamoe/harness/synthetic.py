"""Desk-scale stand-in for a held-out-activity captioning dataset.

Topics are grouped into families that share verbs and places; each topic
owns a few exclusive nouns and an activity word. Captions come from shared
templates. Segment features encode the template, the family and the slot
choices (subject, verb, noun kind, place) through fixed random projections,
but not which topic within the family is shown: naming a held-out topic's
nouns requires its topic documents and the word-vector geometry.

Word vectors are compositional: a noun is ``role + topic + kind + noise``
with topic vectors drawn from a low-dimensional span shared by all topics,
so a map learned on training topics carries over to held-out ones.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from ..text import write_word_vectors
from ..topic import write_topic_corpus
from .data import DatasetManifest, Record, write_features
from .split import build_split

TEMPLATES = (
    "a {subj} {verb} the {noun}",
    "the {subj} {verb} a {noun} at the {place}",
    "{subj} is {verb} the {noun} near the {place}",
    "a {subj} {verb} {noun} in a {place}",
)
FUNCTION_WORDS = ("a", "the", "is", "at", "near", "in", "to", "and", "of", "with",
                  "you", "your", "it", "for", "on", "this")
FILLER_WORDS = 24
SUBJECT_WORDS = ("man", "woman", "person", "boy", "girl", "kid")

_ONSETS = "b c d f g h j k l m n p r s t v z br dr gl kr pl st tr sk".split()
_VOWELS = "a e i o u ai ou".split()


@dataclass
class SyntheticSpec:
    n_families: int = 3
    n_train_topics: int = 12
    n_val_topics: int = 3
    n_unseen_topics: int = 3
    n_templates: int = 3
    n_subjects: int = 4
    verbs_per_family: int = 3
    places_per_family: int = 2
    nouns_per_topic: int = 3
    samples_per_topic: int = 20
    min_segments: int = 4
    max_segments: int = 8
    feature_dim: int = 32
    embed_dim: int = 32
    topic_rank: int = 6
    family_signal: float = 1.0
    topic_signal: float = 0.0
    noise: float = 0.1
    embed_noise: float = 0.15
    docs_mean: float = 2.72
    docs_max: int = 10
    doc_length: int = 40
    seen_ratio: float = 0.1
    seed: int = 0

    @property
    def n_topics(self):
        return self.n_train_topics + self.n_val_topics + self.n_unseen_topics

    def validate(self):
        if self.n_templates < 1 or self.n_templates > len(TEMPLATES):
            raise ValueError(f"n_templates must be in 1..{len(TEMPLATES)}")
        if self.n_subjects > len(SUBJECT_WORDS):
            raise ValueError(f"at most {len(SUBJECT_WORDS)} subjects")
        if min(self.n_families, self.n_train_topics, self.n_subjects, self.verbs_per_family,
               self.places_per_family, self.nouns_per_topic, self.samples_per_topic,
               self.min_segments) < 1:
            raise ValueError("counts must be positive")
        if self.max_segments < self.min_segments:
            raise ValueError("max_segments < min_segments")


class _Words:
    """Unique pronounceable pseudo-words."""

    def __init__(self, rng, taken):
        self.rng = rng
        self.taken = set(taken)

    def __call__(self, syllables=(2, 3), suffix=""):
        while True:
            k = self.rng.integers(syllables[0], syllables[1] + 1)
            w = "".join(self.rng.choice(_ONSETS) + self.rng.choice(_VOWELS) for _ in range(k)) + suffix
            if w not in self.taken:
                self.taken.add(w)
                return w


def _unit(v):
    return v / np.linalg.norm(v)


def generate(spec: SyntheticSpec):
    """Build the dataset in memory; returns a dict of everything written to disk."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    D, F = spec.embed_dim, spec.n_families
    new_word = _Words(rng, FUNCTION_WORDS + SUBJECT_WORDS)

    def gauss(*shape):
        return rng.normal(size=shape) / np.sqrt(shape[-1])

    # word-vector geometry
    role = {r: gauss(D) for r in ("func", "subj", "verb", "noun", "place", "act", "fill")}
    fam_vec = gauss(F, D)
    basis = gauss(spec.topic_rank, D)
    kind_vec = gauss(spec.nouns_per_topic, D)
    vidx_vec = gauss(spec.verbs_per_family, D)
    pidx_vec = gauss(spec.places_per_family, D)
    en = spec.embed_noise

    vectors = {}
    for w in FUNCTION_WORDS:
        vectors[w] = _unit(role["func"] + gauss(D))
    subjects = list(SUBJECT_WORDS[:spec.n_subjects])
    for w in subjects:
        vectors[w] = _unit(role["subj"] + 0.7 * gauss(D))
    families = []
    for f in range(F):
        verbs = [new_word(suffix="s") for _ in range(spec.verbs_per_family)]
        places = [new_word() for _ in range(spec.places_per_family)]
        for i, w in enumerate(verbs):
            vectors[w] = _unit(role["verb"] + fam_vec[f] + vidx_vec[i] + en * gauss(D))
        for j, w in enumerate(places):
            vectors[w] = _unit(role["place"] + fam_vec[f] + pidx_vec[j] + en * gauss(D))
        families.append({"verbs": verbs, "places": places})
    topics = []
    for y in range(spec.n_topics):
        f = y % F
        center = fam_vec[f] + rng.normal(size=spec.topic_rank) @ basis
        nouns = [new_word() for _ in range(spec.nouns_per_topic)]
        act = new_word(suffix="ing")
        for k, w in enumerate(nouns):
            vectors[w] = _unit(role["noun"] + center + kind_vec[k] + en * gauss(D))
        vectors[act] = _unit(role["act"] + center + en * gauss(D))
        topics.append({"family": f, "nouns": nouns, "activity": act,
                       "label": f"{act} {nouns[0]}"})
    fillers = [new_word() for _ in range(FILLER_WORDS)]
    for w in fillers:
        vectors[w] = _unit(role["fill"] + gauss(D))

    # partition topics: the last ones of the list are held out
    n_tr, n_va = spec.n_train_topics, spec.n_val_topics
    train_labels = [t["label"] for t in topics[:n_tr]]
    val_labels = [t["label"] for t in topics[n_tr:n_tr + n_va]]
    unseen_labels = [t["label"] for t in topics[n_tr + n_va:]]

    # topic documents
    texts = {}
    for t in topics:
        fam = families[t["family"]]
        n_docs = int(min(spec.docs_max, 1 + rng.poisson(max(spec.docs_mean - 1, 0.0))))
        pools = [
            (0.45, list(FUNCTION_WORDS)),
            (0.25, t["nouns"]),
            (0.08, [t["activity"]]),
            (0.12, fam["verbs"] + fam["places"]),
            (0.10, fillers),
        ]
        probs = np.array([p for p, _ in pools])
        docs = []
        for _ in range(n_docs):
            words = []
            for _ in range(spec.doc_length):
                pool = pools[rng.choice(len(pools), p=probs)][1]
                words.append(pool[rng.integers(len(pool))])
            docs.append(" ".join(words).capitalize() + ".")
        texts[t["label"]] = docs

    # segment features
    df = spec.feature_dim
    proj = {
        "template": gauss(spec.n_templates, df),
        "family": gauss(F, df),
        "topic": gauss(spec.n_topics, df),
        "subj": gauss(spec.n_subjects, df),
        "verb": gauss(spec.verbs_per_family, df),
        "noun": gauss(spec.nouns_per_topic, df),
        "place": gauss(spec.places_per_family, df),
    }
    slots = ("subj", "verb", "noun", "place")
    records, features = [], {}
    for y, t in enumerate(topics):
        fam = families[t["family"]]
        for s in range(spec.samples_per_topic):
            vid = f"v{y:03d}_{s:03d}"
            tid = int(rng.integers(spec.n_templates))
            choice = {
                "subj": int(rng.integers(spec.n_subjects)),
                "verb": int(rng.integers(spec.verbs_per_family)),
                "noun": int(rng.integers(spec.nouns_per_topic)),
                "place": int(rng.integers(spec.places_per_family)),
            }
            caption = TEMPLATES[tid].format(
                subj=subjects[choice["subj"]], verb=fam["verbs"][choice["verb"]],
                noun=t["nouns"][choice["noun"]], place=fam["places"][choice["place"]])
            m = int(rng.integers(spec.min_segments, spec.max_segments + 1))
            rows = []
            for j in range(m):
                slot = slots[j * len(slots) // m]
                v = (proj["template"][tid] + spec.family_signal * proj["family"][t["family"]]
                     + spec.topic_signal * proj["topic"][y] + proj[slot][choice[slot]])
                rows.append(v + spec.noise * gauss(df))
            features[vid] = np.array(rows)
            records.append(Record(vid, t["label"], [caption], f"features/{vid}.tamf"))
    manifest = build_split(DatasetManifest(records), train_labels, val_labels, unseen_labels,
                           seen_ratio=spec.seen_ratio, seed=spec.seed)
    return {"spec": spec, "manifest": manifest, "features": features, "texts": texts,
            "vectors": vectors, "topics": topics, "families": families,
            "splits": {"train": train_labels, "val": val_labels, "unseen": unseen_labels}}


def gen_synthetic(spec: SyntheticSpec, out_dir) -> DatasetManifest:
    """Write manifest, feature files, topic corpus and word vectors to ``out_dir``."""
    data = generate(spec)
    os.makedirs(os.path.join(out_dir, "features"), exist_ok=True)
    for vid, feats in data["features"].items():
        write_features(os.path.join(out_dir, "features", f"{vid}.tamf"), feats)
    manifest = data["manifest"]
    manifest.root = os.path.abspath(out_dir)
    manifest.write(os.path.join(out_dir, "manifest.jsonl"))
    write_topic_corpus(os.path.join(out_dir, "topics.jsonl"), data["texts"])
    write_word_vectors(os.path.join(out_dir, "embeddings.vec"), data["vectors"])
    with open(os.path.join(out_dir, "synthetic.json"), "w", encoding="utf-8") as f:
        json.dump({"spec": asdict(spec), "splits": data["splits"], "topics": data["topics"],
                   "families": data["families"]}, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest
