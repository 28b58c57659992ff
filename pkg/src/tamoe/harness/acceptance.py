"""Desk-scale experiment drivers shared by the acceptance suite and notebooks.

Each returns plain dicts so callers can print, log or assert on them.
"""

from __future__ import annotations

import json
import os
import statistics
import tempfile
import time

import numpy as np

from ..decoding import greedy_decode_batch
from ..model import ModelConfig, TAMoEModel
from ..text import build_vocab, tokenize
from ..training import Sample, TrainSchedule, collate, train
from .experiment import ExperimentConfig, compare, expert_grid, feature_ablation
from .synthetic import SyntheticSpec, gen_synthetic, generate

# desk-scale sizes used by every synthetic experiment below
DESK_MODEL = dict(embed_dim=32, encoder_size=32, decoder_size=64, attention_size=32,
                  expert_dim=32, gate_hidden=32, max_len=12)
# topics drawn from a rank-2 span so 12 training topics cover the directions
# of the held-out ones
DESK_SPEC = dict(topic_rank=2)
DESK_SCHEDULE = dict(batch_size=16, max_epochs=150, dropout=0.0, patience=1000, beam_size=5)


def memorization_run(epochs: int = 300, seed: int = 0) -> dict:
    """Base model on 10 synthetic samples, full-batch Adadelta for ``epochs`` steps."""
    g = generate(SyntheticSpec(n_families=1, n_train_topics=2, n_val_topics=0, n_unseen_topics=0,
                               samples_per_topic=5, seen_ratio=0.0, seed=seed))
    recs = g["manifest"].records
    caps = [tokenize(r.captions[0]) for r in recs]
    vocab = build_vocab([caps])
    cfg = ModelConfig(vocab_size=len(vocab), feature_dim=g["spec"].feature_dim, num_experts=1,
                      family="base", dropout=0.0,
                      **{k: v for k, v in DESK_MODEL.items() if k != "max_len"})
    model = TAMoEModel(cfg, rng=np.random.default_rng(seed))
    samples = [Sample(r.video_id, r.activity_label, g["features"][r.video_id],
                      np.zeros(cfg.topic_dim), vocab.encode(c), [r.captions[0]])
               for r, c in zip(recs, caps)]
    t0 = time.perf_counter()
    res = train(model, samples, [], TrainSchedule(batch_size=len(samples), max_epochs=epochs,
                                                  seed=seed))
    seconds = time.perf_counter() - t0
    X, L, T, _ = collate(samples)
    out = greedy_decode_batch(model, X, L, T)
    return {"first_loss": res.log[0]["per_token_loss"],
            "final_loss": res.log[-1]["per_token_loss"],
            "steps": epochs,
            "reproduced": sum(o == s.tokens for o, s in zip(out, samples)),
            "n": len(samples), "seconds": seconds, "model": model}


def desk_config(dataset, output, **overrides) -> ExperimentConfig:
    kw = {**DESK_MODEL, **DESK_SCHEDULE, "dataset": str(dataset), "output": str(output),
          "num_experts": 8, "save_artifacts": False}
    kw.update(overrides)
    return ExperimentConfig(**kw)


def zero_shot_comparison(seeds=(0, 1, 2, 3, 4), workdir=None, families=("base", "topic", "tamoe"),
                         log_path=None, **overrides) -> dict:
    """Unseen-topic CIDEr-D per family over seeds; one synthetic dataset per seed."""
    workdir = workdir or tempfile.mkdtemp(prefix="tamoe-zs-")
    variants = {f: {"family": f, "num_experts": 8 if f == "tamoe" else 1} for f in families}
    runs = {f: {"cider": [], "cider_n": []} for f in families}
    t0 = time.perf_counter()
    for seed in seeds:
        data_dir = os.path.join(workdir, f"data{seed}")
        gen_synthetic(SyntheticSpec(seed=seed, **DESK_SPEC), data_dir)
        cfg = desk_config(data_dir, os.path.join(workdir, "runs"), **overrides)
        res = compare(cfg, variants, [seed], log_path=log_path)
        for f in families:
            runs[f]["cider"] += res[f]["cider"]
            runs[f]["cider_n"] += res[f]["cider_n"]
    for v in runs.values():
        v["mean"] = statistics.fmean(v["cider"])
        v["stdev"] = statistics.stdev(v["cider"]) if len(v["cider"]) > 1 else 0.0
    runs["seconds"] = time.perf_counter() - t0
    return runs


def ablation_runs(seed: int = 0, workdir=None, expert_scale: int = 8, log_path=None,
                  **overrides) -> dict:
    """Feature ablation and expert-capacity grid on one synthetic dataset."""
    workdir = workdir or tempfile.mkdtemp(prefix="tamoe-abl-")
    data_dir = os.path.join(workdir, "data")
    gen_synthetic(SyntheticSpec(seed=seed, **DESK_SPEC), data_dir)
    cfg = desk_config(data_dir, os.path.join(workdir, "runs"), **overrides)
    t0 = time.perf_counter()
    features = compare(cfg, feature_ablation(), [seed], log_path=log_path)
    experts = compare(cfg, expert_grid(expert_scale), [seed], log_path=log_path)
    return {"features": features, "experts": experts, "seconds": time.perf_counter() - t0}


def dump(result: dict, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump({k: v for k, v in result.items() if k != "model"}, f, indent=2)
