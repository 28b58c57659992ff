"""Command-line entry point: ``tamoe <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data or contract error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields

import numpy as np

from .decoding import read_decodes, write_decodes
from .metrics import write_score_report
from .model import CheckpointError, read_checkpoint
from .numerics import DeterminismError, DimensionError, DomainError
from .text import EmbeddingFormatError, build_vocab, load_embeddings, tokenize
from .topic import read_topic_corpus, top_k_words, topic_embedding
from .training import NumericalError, SplitContractError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("tamoe")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _load_config(path, overrides=()):
    from .harness.experiment import ExperimentConfig, load_config
    cfg = load_config(path) if path else ExperimentConfig()
    known = {f.name: f for f in fields(ExperimentConfig)}
    kw = {}
    for item in overrides or ():
        key, sep, value = item.partition("=")
        if not sep or key not in known:
            raise UsageError(f"bad override {item!r}")
        kw[key] = _coerce(value, known[key].default)
    return cfg.replace(**kw) if kw else cfg


def _coerce(value, default):
    if isinstance(default, bool):
        if value.lower() not in ("true", "false", "1", "0"):
            raise UsageError(f"expected a boolean, got {value!r}")
        return value.lower() in ("true", "1")
    try:
        return type(default)(value)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_build_vocab(args):
    from .harness.data import DatasetManifest
    man = DatasetManifest.read(os.path.join(args.dataset, "manifest.jsonl"))
    corpus, _ = read_topic_corpus(os.path.join(args.dataset, "topics.jsonl"))
    caps = [tokenize(c) for r in man.by_split("train") for c in r.captions]
    labels = [tokenize(r.activity_label) for r in man.records]
    vocab = build_vocab([caps, corpus.tokens(), labels], args.min_count)
    vocab.save(args.out)
    print(f"{len(vocab)} tokens -> {args.out}")


def cmd_topic_embed(args):
    from .text import Vocabulary
    corpus, _ = read_topic_corpus(args.topics)
    vocab = Vocabulary.load(args.vocab)
    table = load_embeddings(args.vectors, vocab, "pretrained-frozen").matrix
    out = {}
    for label in corpus.labels:
        out[label] = topic_embedding(label, corpus, table, vocab, parts=args.parts).tolist()
        print(f"{label}: {' '.join(top_k_words(corpus, label, args.top_k))}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(out, f)


def cmd_gen_synthetic(args):
    from .harness.synthetic import SyntheticSpec, gen_synthetic
    spec_fields = {f.name: f for f in fields(SyntheticSpec)}
    kw = {"seed": args.seed}
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep or key not in spec_fields:
            raise UsageError(f"bad setting {item!r}")
        kw[key] = _coerce(value, spec_fields[key].default)
    man = gen_synthetic(SyntheticSpec(**kw), args.out)
    print(f"{len(man.records)} videos -> {args.out}")


def cmd_train(args):
    from .harness.experiment import build_model, prepare, write_config
    from .training import train
    cfg = _load_config(args.config, args.set)
    data = prepare(cfg)
    model = build_model(cfg, data)
    os.makedirs(cfg.output, exist_ok=True)
    write_config(os.path.join(cfg.output, "config.yaml"), cfg)
    data.vocab.save(os.path.join(cfg.output, "vocab.txt"))
    ckpt = os.path.join(cfg.output, "best.ckpt")
    res = train(model, data.splits["train"], data.splits["val"], cfg.schedule(), vocab=data.vocab,
                log_path=os.path.join(cfg.output, "train_log.jsonl"), checkpoint_path=ckpt,
                vocab_digest=data.vocab.digest())
    if res.best_epoch < 0:
        model.save(ckpt, data.vocab.digest())
    print(f"best val CIDEr-D {res.best_cider:.4f} at epoch {res.best_epoch} -> {ckpt}")


def cmd_decode(args):
    from .harness.experiment import decode_samples, prepare
    cfg = _load_config(args.config, args.set)
    data = prepare(cfg)
    model = read_checkpoint(args.checkpoint, data.vocab.digest())
    if args.max_len is not None:
        model.config.max_len = args.max_len
    decs = decode_samples(model, data.splits[args.split], data.vocab, args.beam, cfg.length_norm)
    out = args.out or os.path.join(cfg.output, f"decode_{args.split}.jsonl")
    write_decodes(out, decs)
    print(f"{len(decs)} captions -> {out}")


def cmd_eval(args):
    from .harness.data import DatasetManifest
    from .metrics import evaluate
    man = DatasetManifest.read(os.path.join(args.dataset, "manifest.jsonl"))
    recs = {r.video_id: r for r in man.records}
    decs = read_decodes(args.decodes)
    missing = [d["video_id"] for d in decs if d["video_id"] not in recs]
    if missing:
        raise SplitContractError(f"unknown video ids: {missing[:5]}")
    rep = evaluate([d["caption"] for d in decs], [recs[d["video_id"]].captions for d in decs],
                   labels=[recs[d["video_id"]].activity_label for d in decs])
    if args.out:
        write_score_report(args.out, {"decodes": rep})
    print(json.dumps({"bleu": rep.bleu, "rouge_l": rep.rouge_l, "cider": rep.cider,
                      "cider_n": rep.cider_n}, indent=2))


def cmd_gradcheck(args):
    from .harness.gradcheck import check_model_gradients
    ok = True
    for family in args.family:
        rep = check_model_gradients(family, seed=args.seed, epsilon=args.epsilon,
                                    tolerance=args.tolerance)
        name, err = rep.worst()
        print(f"{family}: max relative error {rep.max_error:.3e} ({name}) "
              f"{'PASS' if rep.passed else 'FAIL'}")
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_run(args):
    from .harness import experiment as ex
    cfg = _load_config(args.config, args.set)
    if args.ablation or args.families:
        if args.ablation == "features":
            variants = ex.feature_ablation()
        elif args.ablation == "experts":
            variants = ex.expert_grid(args.expert_scale)
        else:
            variants = {f: {"family": f} for f in args.families.split(",")}
        os.makedirs(cfg.output, exist_ok=True)
        res = ex.compare(cfg, variants, args.seeds, log_path=os.path.join(cfg.output, "compare.jsonl"))
        for name, r in res.items():
            print(f"{name}: unseen CIDEr-D {r['mean']:.4f} +- {r['stdev']:.4f}")
        with open(os.path.join(cfg.output, "compare.json"), "w", encoding="utf-8") as f:
            json.dump(res, f, indent=2)
        return EXIT_OK
    summary = ex.run_experiment(cfg)
    for split, rep in summary["reports"].items():
        print(f"{split}: CIDEr-D {rep['cider']:.4f} BLEU-4 {rep['bleu'][3]:.4f} "
              f"ROUGE-L {rep['rouge_l']:.4f}")
    return EXIT_OK


def build_parser():
    p = _Parser(prog="tamoe", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    setopt = dict(action="append", metavar="KEY=VALUE", help="override a config value")

    s = sub.add_parser("build-vocab", help="vocabulary from train captions, topic corpus and labels")
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--min-count", type=int, default=1)
    s.set_defaults(func=cmd_build_vocab)

    s = sub.add_parser("topic-embed", help="topic embeddings and top TF-IDF words per label")
    s.add_argument("--topics", required=True)
    s.add_argument("--vocab", required=True)
    s.add_argument("--vectors", required=True)
    s.add_argument("--parts", choices=["both", "label", "tfidf", "none"], default="both")
    s.add_argument("--top-k", type=int, default=4)
    s.add_argument("--out")
    s.set_defaults(func=cmd_topic_embed)

    s = sub.add_parser("gen-synthetic", help="write a synthetic dataset directory")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--set", **setopt)
    s.set_defaults(func=cmd_gen_synthetic)

    s = sub.add_parser("train", help="train a model from a config file")
    s.add_argument("--config")
    s.add_argument("--set", **setopt)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("decode", help="caption a split with a trained checkpoint")
    s.add_argument("--config")
    s.add_argument("--set", **setopt)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--split", default="unseen-test",
                   choices=["train", "val", "seen-test", "unseen-test"])
    s.add_argument("--beam", type=int, default=5)
    s.add_argument("--max-len", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("eval", help="score a decode file against the manifest references")
    s.add_argument("--dataset", required=True)
    s.add_argument("--decodes", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    s.add_argument("--family", action="append", choices=["tamoe", "topic", "base"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epsilon", type=float, default=1e-5)
    s.add_argument("--tolerance", type=float, default=1e-4)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("run", help="full experiment (or a multi-seed comparison) from a config")
    s.add_argument("--config")
    s.add_argument("--set", **setopt)
    s.add_argument("--families", help="comma-separated families to compare")
    s.add_argument("--ablation", choices=["features", "experts"])
    s.add_argument("--expert-scale", type=int, default=1,
                   help="divide the expert-grid dimensions by this factor")
    s.add_argument("--seeds", type=lambda v: [int(x) for x in v.split(",")], default=[0])
    s.set_defaults(func=cmd_run)
    return p


def _exit_code(exc):
    from .harness.data import DataError
    from .harness.experiment import ExperimentError
    from .harness.split import SplitError
    if isinstance(exc, ExperimentError):
        exc = exc.cause
    if isinstance(exc, (NumericalError, FloatingPointError, DeterminismError)):
        return EXIT_NUMERIC
    if isinstance(exc, (DataError, SplitError, SplitContractError, CheckpointError,
                        EmbeddingFormatError, DimensionError, DomainError, ValueError,
                        KeyError, OSError)):
        return EXIT_DATA
    return None


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "gradcheck" and not args.family:
        args.family = ["tamoe", "topic", "base"]
    try:
        with np.errstate(over="ignore"):
            code = args.func(args)
        return EXIT_OK if code is None else code
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - mapped to an exit code below
        code = _exit_code(exc)
        if code is None:
            raise
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
