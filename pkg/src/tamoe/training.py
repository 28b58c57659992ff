"""Adadelta, gradient clipping and the epoch loop."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from .decoding import greedy_decode_batch
from .metrics import cider
from .model import DropoutMaskSet
from .text import EOS_ID, PAD_ID

log = logging.getLogger(__name__)


class SplitContractError(ValueError):
    """Train and validation data share an activity label."""


class NumericalError(FloatingPointError):
    pass


class Adadelta:
    """Adadelta with a learning-rate multiplier; frozen parameters are skipped."""

    def __init__(self, params: dict, rho: float = 0.95, eps: float = 1e-6, lr: float = 1.0):
        self.params = params
        self.rho = rho
        self.eps = eps
        self.lr = lr
        self.sq_grad = {k: np.zeros_like(p.value) for k, p in params.items()}
        self.sq_delta = {k: np.zeros_like(p.value) for k, p in params.items()}

    def step(self):
        for name, p in self.params.items():
            if p.frozen:
                continue
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient in parameter {name!r}")
            eg = self.sq_grad[name]
            ed = self.sq_delta[name]
            eg *= self.rho
            eg += (1 - self.rho) * g * g
            # the multiplier is part of the update, so it enters E[delta^2] too
            delta = self.lr * np.sqrt(ed + self.eps) / np.sqrt(eg + self.eps) * g
            ed *= self.rho
            ed += (1 - self.rho) * delta * delta
            p.value -= delta


def adadelta_step(params, optimizer: Adadelta):
    optimizer.params = params
    optimizer.step()


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_gradients(grads, max_norm: float):
    """Rescale a list of arrays so their joint L2 norm is at most ``max_norm``."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(grads)
    if norm <= max_norm:
        return list(grads)
    scale = max_norm / norm
    return [g * scale for g in grads]


def clip_parameter_grads(params: dict, max_norm: float) -> float:
    names = [k for k, p in params.items() if not p.frozen]
    clipped = clip_gradients([params[k].grad for k in names], max_norm)
    for k, g in zip(names, clipped):
        params[k].grad = g
    return global_norm(clipped)


@dataclass
class Sample:
    video_id: str
    label: str
    features: np.ndarray  # (m, d_f)
    topic: np.ndarray     # (2D,)
    tokens: list          # gold caption ids without EOS
    references: list      # caption strings


@dataclass
class TrainSchedule:
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 4
    lr_decay: float = 0.5
    sampling_start: float = 1.0
    sampling_floor: float = 0.75
    clip_norm: float | None = 5.0
    rho: float = 0.95
    eps: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        for name in ("sampling_start", "sampling_floor"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")

    def sampling_prob(self, epoch: int) -> float:
        """Teacher-forcing probability for a 0-based epoch, linear to the floor."""
        if self.max_epochs <= 1:
            return self.sampling_start
        frac = min(epoch / (self.max_epochs - 1), 1.0)
        return self.sampling_start + (self.sampling_floor - self.sampling_start) * frac


def collate(samples, max_len=None, dtype="float64"):
    """Pad a list of samples into batch arrays.

    Targets are the gold ids followed by EOS, padded with PAD.
    """
    n = len(samples)
    M = max(s.features.shape[0] for s in samples)
    df = samples[0].features.shape[1]
    X = np.zeros((n, M, df), dtype=dtype)
    lengths = np.array([s.features.shape[0] for s in samples])
    for i, s in enumerate(samples):
        X[i, :lengths[i]] = s.features
    seqs = [list(s.tokens) + [EOS_ID] for s in samples]
    if max_len is not None:
        seqs = [q[:max_len - 1] + [EOS_ID] if len(q) > max_len else q for q in seqs]
    T = max(len(q) for q in seqs)
    Y = np.full((n, T), PAD_ID)
    for i, q in enumerate(seqs):
        Y[i, :len(q)] = q
    topics = np.stack([s.topic for s in samples]).astype(dtype)
    return X, lengths, topics, Y


def greedy_captions(model, samples, vocab, batch_size: int = 64):
    out = []
    for i in range(0, len(samples), batch_size):
        chunk = samples[i:i + batch_size]
        X, L, topics, _ = collate(chunk, dtype=model.config.dtype)
        for ids in greedy_decode_batch(model, X, L, topics):
            out.append(" ".join(vocab.decode(ids)))
    return out


def validation_cider(model, samples, vocab) -> float:
    caps = greedy_captions(model, samples, vocab)
    return cider(caps, [s.references for s in samples])[0]


@dataclass
class TrainResult:
    log: list
    best_cider: float
    best_epoch: int
    best_params: dict


def train(model, train_samples, val_samples, schedule: TrainSchedule, vocab=None,
          log_path=None, checkpoint_path=None, vocab_digest=None, validate=None,
          clock=time.perf_counter, restore_best: bool = True) -> TrainResult:
    """Shuffle/batch/step for ``schedule.max_epochs`` epochs.

    After each epoch the validation set is greedily decoded and scored with
    CIDEr-D (or ``validate(model)`` if given). No new best for ``patience``
    epochs halves the learning-rate multiplier and resets the counter.
    """
    train_labels = {s.label for s in train_samples}
    overlap = train_labels & {s.label for s in val_samples}
    if overlap:
        raise SplitContractError(f"labels in both train and validation: {sorted(overlap)}")
    if validate is None and val_samples:
        if vocab is None:
            raise ValueError("a vocabulary is needed to score validation captions")

        def validate(m):
            return validation_cider(m, val_samples, vocab)

    cfg = model.config
    rng = np.random.default_rng(schedule.seed)
    opt = Adadelta(model.params, schedule.rho, schedule.eps, lr=1.0)
    best, best_epoch, stale = -np.inf, -1, 0
    best_params = {k: p.value.copy() for k, p in model.params.items()}
    records = []
    t0 = clock()
    logf = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(schedule.max_epochs):
            prob = schedule.sampling_prob(epoch)
            order = rng.permutation(len(train_samples))
            losses, tok_losses = [], []
            for i in range(0, len(order), schedule.batch_size):
                batch = [train_samples[j] for j in order[i:i + schedule.batch_size]]
                X, L, topics, Y = collate(batch, cfg.max_len, cfg.dtype)
                masks = DropoutMaskSet.sample(cfg, len(batch), rng)
                res = model.loss_and_grad(X, L, topics, Y, masks=masks,
                                          sampling_prob=prob, rng=rng)
                if not np.isfinite(res["loss"]):
                    raise NumericalError(f"non-finite loss at epoch {epoch + 1}")
                if schedule.clip_norm:
                    clip_parameter_grads(model.params, schedule.clip_norm)
                opt.step()
                losses.append(float(res["loss"]))
                tok_losses.append(res["per_token_loss"])
            score = float(validate(model)) if validate is not None else float("nan")
            if validate is not None:
                if score > best:
                    best, best_epoch, stale = score, epoch + 1, 0
                    best_params = {k: p.value.copy() for k, p in model.params.items()}
                    if checkpoint_path:
                        model.save(checkpoint_path, vocab_digest or b"\0" * 32)
                else:
                    stale += 1
                    if stale >= schedule.patience:
                        opt.lr *= schedule.lr_decay
                        stale = 0
            rec = {"epoch": epoch + 1, "train_loss": float(np.mean(losses)),
                   "per_token_loss": float(np.mean(tok_losses)),
                   "val_cider": score if validate is not None else None,
                   "best_cider": float(best) if np.isfinite(best) else None,
                   "lr": opt.lr, "sampling_prob": prob,
                   "seconds": round(clock() - t0, 3)}
            records.append(rec)
            log.info("epoch %d loss %.4f val %.4f lr %g", rec["epoch"], rec["train_loss"],
                     score, opt.lr)
            if logf:
                logf.write(json.dumps(rec) + "\n")
                logf.flush()
    finally:
        if logf:
            logf.close()
    if restore_best and validate is not None and best_epoch > 0:
        for k, v in best_params.items():
            model.params[k].value[...] = v
    return TrainResult(records, float(best), best_epoch, best_params)


def schedule_dict(schedule: TrainSchedule) -> dict:
    return asdict(schedule)
