"""End-to-end experiments: data -> vocab -> topics -> train -> decode -> score."""

from __future__ import annotations

import json
import logging
import os
import statistics
from dataclasses import asdict, dataclass, fields

import numpy as np
import yaml

from ..decoding import beam_search, greedy_decode_batch, write_decodes
from ..metrics import evaluate, write_score_report
from ..model import ModelConfig, TAMoEModel
from ..text import build_vocab, load_embeddings, tokenize
from ..topic import read_topic_corpus, top_k_words, topic_embedding
from ..training import Sample, TrainSchedule, collate, train
from .data import DatasetManifest, read_features, subsample_features

log = logging.getLogger(__name__)

EMBEDDING_MODES = {"fasttext": "pretrained-frozen", "task-specific": "task-specific"}

# the four feature configurations of the ablation: (use_video, topic parts)
FEATURE_ABLATION = {
    "video": (True, "none"),
    "video+label": (True, "label"),
    "video+tfidf": (True, "tfidf"),
    "label+tfidf": (False, "both"),
    "video+label+tfidf": (True, "both"),
}


class ExperimentError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.cause = exc


@dataclass
class ExperimentConfig:
    dataset: str = ""
    output: str = "runs/experiment"
    family: str = "tamoe"
    embedding: str = "fasttext"
    topic_parts: str = "both"
    use_video: bool = True
    embed_dim: int = 300
    encoder_size: int = 512
    decoder_size: int = 1024
    attention_size: int = 512
    num_experts: int = 8
    expert_dim: int = 256
    gate_hidden: int = 512
    temperature: float = 1.0
    dropout: float = 0.5
    max_features: int = 200
    max_len: int = 32
    init_scale: float = 0.1
    forget_bias: float = 1.0
    dtype: str = "float64"
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 4
    lr_decay: float = 0.5
    sampling_start: float = 1.0
    sampling_floor: float = 0.75
    clip_norm: float = 5.0
    rho: float = 0.95
    eps: float = 1e-6
    seed: int = 0
    beam_size: int = 5
    length_norm: bool = False
    min_count: int = 1
    label_noise: float = 0.0
    seen_ratio: float = 0.1
    save_artifacts: bool = True

    def __post_init__(self):
        if self.embedding not in EMBEDDING_MODES:
            raise ValueError(f"embedding must be one of {sorted(EMBEDDING_MODES)}")
        if self.family != "tamoe":
            self.num_experts = 1

    def model_config(self, vocab_size, feature_dim) -> ModelConfig:
        names = {f.name for f in fields(ModelConfig)}
        kw = {k: v for k, v in asdict(self).items() if k in names}
        return ModelConfig(vocab_size=vocab_size, feature_dim=feature_dim, **kw)

    def schedule(self) -> TrainSchedule:
        names = {f.name for f in fields(TrainSchedule)}
        kw = {k: v for k, v in asdict(self).items() if k in names}
        return TrainSchedule(**kw)

    def replace(self, **kw) -> "ExperimentConfig":
        return ExperimentConfig(**{**asdict(self), **kw})


def load_config(path) -> ExperimentConfig:
    """Read a flat ``key: value`` YAML file."""
    with open(path, encoding="utf-8") as f:
        raw = yaml.safe_load(f) or {}
    if not isinstance(raw, dict) or any(isinstance(v, (dict, list)) for v in raw.values()):
        raise ValueError(f"{path}: config must be a flat mapping")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValueError(f"{path}: unknown keys {unknown}")
    return ExperimentConfig(**raw)


def write_config(path, config: ExperimentConfig):
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(asdict(config), f, sort_keys=False)


@dataclass
class PreparedData:
    manifest: DatasetManifest
    vocab: object
    table: np.ndarray
    frozen: bool
    topics: dict
    corpus: object
    splits: dict  # split name -> list of Sample


def prepare(config: ExperimentConfig) -> PreparedData:
    """Load a dataset directory and turn it into model-ready samples.

    The vocabulary covers the training captions, the topic corpus and the
    activity labels; held-out captions never contribute words.
    """
    root = config.dataset
    manifest = DatasetManifest.read(os.path.join(root, "manifest.jsonl"))
    manifest.validate()
    corpus, _ = read_topic_corpus(os.path.join(root, "topics.jsonl"))
    labels = sorted({r.activity_label for r in manifest.records})
    train_caps = [tokenize(c) for r in manifest.by_split("train") for c in r.captions]
    vocab = build_vocab([train_caps, corpus.tokens(), [tokenize(lab) for lab in labels]],
                        config.min_count)
    vec_path = os.path.join(root, "embeddings.vec")
    rng = np.random.default_rng(config.seed)
    emb = load_embeddings(vec_path, vocab, EMBEDDING_MODES[config.embedding], rng=rng,
                          init_scale=config.init_scale)
    if config.embed_dim != emb.dim:
        log.info("embed_dim %d overridden by word-vector dimension %d", config.embed_dim, emb.dim)
        config.embed_dim = emb.dim
    # topic vectors always come from the pretrained file
    pre = load_embeddings(vec_path, vocab, "pretrained-frozen", rng=np.random.default_rng(config.seed))
    topics = {lab: topic_embedding(lab, corpus, pre.matrix, vocab, parts=config.topic_parts)
              for lab in labels}
    noise_rng = np.random.default_rng(config.seed + 7919)
    splits = {}
    for split in ("train", "val", "seen-test", "unseen-test"):
        samples = []
        for r in manifest.by_split(split):
            feats = subsample_features(read_features(manifest.feature_path(r)), config.max_features)
            label = r.activity_label
            if config.label_noise > 0 and split.endswith("test") and noise_rng.random() < config.label_noise:
                label = labels[noise_rng.integers(len(labels))]
            toks = tokenize(r.captions[0])[:config.max_len - 1]
            samples.append(Sample(r.video_id, label, feats, topics[label], vocab.encode(toks),
                                  list(r.captions)))
        splits[split] = samples
    return PreparedData(manifest, vocab, emb.matrix, emb.frozen, topics, corpus, splits)


def build_model(config: ExperimentConfig, data: PreparedData) -> TAMoEModel:
    feat_dim = data.splits["train"][0].features.shape[1]
    cfg = config.model_config(len(data.vocab), feat_dim)
    return TAMoEModel(cfg, data.table, frozen_embeddings=data.frozen,
                      rng=np.random.default_rng(config.seed))


def decode_samples(model, samples, vocab, beam_size=5, length_norm=False):
    """Beam (or greedy for ``beam_size == 1``) captions for every sample."""
    out = []
    if beam_size == 1:
        for i in range(0, len(samples), 64):
            chunk = samples[i:i + 64]
            X, L, T, _ = collate(chunk, dtype=model.config.dtype)
            for s, ids in zip(chunk, greedy_decode_batch(model, X, L, T)):
                out.append({"video_id": s.video_id, "caption": " ".join(vocab.decode(ids)),
                            "log_prob": None})
        return out
    for s in samples:
        best = beam_search(model, s.features, s.topic, beam_size,
                           length_norm=length_norm)[0]
        out.append({"video_id": s.video_id, "caption": " ".join(vocab.decode(best.words)),
                    "log_prob": best.log_prob})
    return out


def score_decodes(decodes, samples):
    by_id = {d["video_id"]: d["caption"] for d in decodes}
    cands = [by_id[s.video_id] for s in samples]
    return evaluate(cands, [s.references for s in samples], labels=[s.label for s in samples])


def run_experiment(config: ExperimentConfig, data: PreparedData | None = None) -> dict:
    """Train one model and score it on the seen and unseen test splits."""
    stage = "prepare"
    try:
        data = data if data is not None else prepare(config)
        stage = "build"
        model = build_model(config, data)
        out = config.output
        if config.save_artifacts:
            os.makedirs(out, exist_ok=True)
            write_config(os.path.join(out, "config.yaml"), config)
            data.vocab.save(os.path.join(out, "vocab.txt"))
        stage = "train"
        result = train(
            model, data.splits["train"], data.splits["val"], config.schedule(), vocab=data.vocab,
            log_path=os.path.join(out, "train_log.jsonl") if config.save_artifacts else None,
            checkpoint_path=os.path.join(out, "best.ckpt") if config.save_artifacts else None,
            vocab_digest=data.vocab.digest())
        stage = "decode"
        reports, decodes = {}, {}
        for split in ("seen-test", "unseen-test"):
            samples = data.splits[split]
            if not samples:
                continue
            decodes[split] = decode_samples(model, samples, data.vocab, config.beam_size,
                                            config.length_norm)
            if config.save_artifacts:
                write_decodes(os.path.join(out, f"decode_{split}.jsonl"), decodes[split])
        stage = "eval"
        for split, decs in decodes.items():
            reports[split] = score_decodes(decs, data.splits[split])
        summary = {
            "config": asdict(config),
            "best_val_cider": result.best_cider,
            "best_epoch": result.best_epoch,
            "epochs": len(result.log),
            "final_loss": result.log[-1]["per_token_loss"] if result.log else None,
            "reports": {k: v.to_dict() for k, v in reports.items()},
        }
        if config.save_artifacts:
            write_score_report(os.path.join(out, "report.json"), reports)
            with open(os.path.join(out, "summary.json"), "w", encoding="utf-8") as f:
                json.dump(summary, f, indent=2, sort_keys=True)
        summary["log"] = result.log
        summary["model"] = model
        summary["decodes"] = decodes
        return summary
    except ExperimentError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage attached
        raise ExperimentError(stage, exc) from exc


def compare(config: ExperimentConfig, variants: dict, seeds, split="unseen-test",
            log_path=None) -> dict:
    """Run every ``{name: overrides}`` variant for each seed.

    Returns ``{name: {"cider": [...], "mean": m, "stdev": s}}`` and appends
    one JSON line per run to ``log_path``.
    """
    out = {name: {"cider": [], "cider_n": []} for name in variants}
    logf = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for seed in seeds:
            cache = {}
            for name, overrides in variants.items():
                cfg = config.replace(seed=seed, **overrides,
                                     output=os.path.join(config.output, f"{name}_s{seed}"))
                key = (cfg.embedding, cfg.topic_parts)
                if key not in cache:
                    cache[key] = prepare(cfg)
                res = run_experiment(cfg, cache[key])
                rep = res["reports"][split]
                out[name]["cider"].append(rep["cider"])
                out[name]["cider_n"].append(rep["cider_n"])
                line = {"variant": name, "seed": seed, "split": split, "cider": rep["cider"],
                        "cider_n": rep["cider_n"], "bleu": rep["bleu"], "rouge_l": rep["rouge_l"],
                        "best_val_cider": res["best_val_cider"], "epochs": res["epochs"]}
                log.info("%s", line)
                if logf:
                    logf.write(json.dumps(line) + "\n")
                    logf.flush()
    finally:
        if logf:
            logf.close()
    for v in out.values():
        v["mean"] = statistics.fmean(v["cider"])
        v["stdev"] = statistics.stdev(v["cider"]) if len(v["cider"]) > 1 else 0.0
    return out


def expert_grid(scale: int = 1) -> dict:
    """(experts, expert dim) pairs of the capacity ablation, divided by ``scale``."""
    grid = {"n1_d1024": (1, 1024), "n4_d512": (4, 512), "n8_d256": (8, 256), "n64_d128": (64, 128)}
    return {k: {"family": "tamoe", "num_experts": n, "expert_dim": max(d // scale, 1)}
            for k, (n, d) in grid.items()}


def feature_ablation() -> dict:
    return {k: {"family": "tamoe", "use_video": v, "topic_parts": parts}
            for k, (v, parts) in FEATURE_ABLATION.items()}


def topic_report(data: PreparedData, k: int = 4) -> dict:
    return {lab: top_k_words(data.corpus, lab, k) for lab in data.corpus.labels}
