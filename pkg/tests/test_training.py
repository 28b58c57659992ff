import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tamoe.model import ModelConfig, TAMoEModel
from tamoe.numerics import Parameter
from tamoe.text import Vocabulary
from tamoe.training import (
    Adadelta,
    NumericalError,
    Sample,
    SplitContractError,
    TrainSchedule,
    clip_gradients,
    clip_parameter_grads,
    collate,
    global_norm,
    train,
)


def test_adadelta_first_step_hand_value():
    p = Parameter(np.array([0.0]))
    p.grad[...] = 1.0
    Adadelta({"x": p}, rho=0.95, eps=1e-6).step()
    expected = -math.sqrt(1e-6) / math.sqrt(0.05 + 1e-6)
    assert p.value[0] == pytest.approx(expected, rel=1e-12)
    assert p.value[0] == pytest.approx(-0.004471, abs=2e-6)


def test_adadelta_reference_loop():
    rng = np.random.default_rng(0)
    p = Parameter(rng.normal(size=3))
    opt = Adadelta({"x": p}, rho=0.9, eps=1e-4, lr=0.5)
    x, eg, ed = p.value.copy(), np.zeros(3), np.zeros(3)
    for _ in range(5):
        g = rng.normal(size=3)
        p.grad[...] = g
        opt.step()
        for i in range(3):
            eg[i] = 0.9 * eg[i] + 0.1 * g[i] ** 2
            d = 0.5 * math.sqrt(ed[i] + 1e-4) / math.sqrt(eg[i] + 1e-4) * g[i]
            ed[i] = 0.9 * ed[i] + 0.1 * d * d
            x[i] -= d
    np.testing.assert_allclose(p.value, x, rtol=1e-13)
    assert np.all(opt.sq_grad["x"] >= 0) and np.all(opt.sq_delta["x"] >= 0)


def test_adadelta_zero_gradient_and_frozen():
    p = Parameter(np.ones(2))
    f = Parameter(np.ones(2), frozen=True)
    opt = Adadelta({"p": p, "f": f})
    p.grad[...] = 1.0
    opt.step()
    acc = opt.sq_grad["p"].copy()
    p.grad[...] = 0.0
    before = p.value.copy()
    opt.step()
    np.testing.assert_array_equal(p.value, before)
    np.testing.assert_allclose(opt.sq_grad["p"], 0.95 * acc)
    f.grad[...] = 3.0
    for _ in range(100):
        opt.step()
    np.testing.assert_array_equal(f.value, 1.0)


def test_adadelta_nan_names_parameter():
    p = Parameter(np.ones(2))
    p.grad[0] = np.nan
    with pytest.raises(NumericalError, match="'dec_Wx'"):
        Adadelta({"dec_Wx": p}).step()


def test_clip_hand_cases():
    g = [np.array([6.0, 8.0])]
    out = clip_gradients(g, 5.0)
    np.testing.assert_allclose(out[0], [3.0, 4.0])
    assert abs(global_norm(out) - 5.0) < 1e-9
    small = [np.array([1.8, 2.4])]
    assert clip_gradients(small, 5.0)[0] is small[0]
    with pytest.raises(ValueError):
        clip_gradients(g, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 10))
def test_clip_preserves_direction(seed, max_norm):
    rng = np.random.default_rng(seed)
    g = [rng.normal(size=(3, 2)) * 5, rng.normal(size=4) * 5]
    c = clip_gradients(g, max_norm)
    a = np.concatenate([x.ravel() for x in g])
    b = np.concatenate([x.ravel() for x in c])
    assert abs(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)) - 1) < 1e-12
    assert global_norm(c) <= max_norm + 1e-9


def test_clip_parameter_grads_skips_frozen():
    a, f = Parameter(np.zeros(2)), Parameter(np.zeros(2), frozen=True)
    a.grad[...] = [30.0, 40.0]
    f.grad[...] = 1000.0
    assert clip_parameter_grads({"a": a, "f": f}, 5.0) == pytest.approx(5.0)


def test_sampling_schedule():
    s = TrainSchedule(max_epochs=5)
    assert [s.sampling_prob(e) for e in range(5)] == pytest.approx([1.0, 0.9375, 0.875, 0.8125, 0.75])
    with pytest.raises(ValueError):
        TrainSchedule(patience=0)
    with pytest.raises(ValueError):
        TrainSchedule(sampling_floor=1.5)


def _samples(n, label="a", seed=0, d=3):
    rng = np.random.default_rng(seed)
    return [Sample(f"{label}{i}", label, rng.normal(size=(rng.integers(2, 5), d)),
                   rng.normal(size=8), list(rng.integers(4, 12, size=rng.integers(2, 5))),
                   ["x y"]) for i in range(n)]


def test_collate_pads_and_appends_eos():
    s = _samples(3)
    X, L, T, Y = collate(s)
    assert X.shape[0] == 3 and list(L) == [x.features.shape[0] for x in s]
    for i, x in enumerate(s):
        n = len(x.tokens)
        assert list(Y[i, :n]) == x.tokens and Y[i, n] == 2 and np.all(Y[i, n + 1:] == 0)
        assert np.all(X[i, L[i]:] == 0)


def _model(seed=0):
    cfg = ModelConfig(vocab_size=12, feature_dim=3, embed_dim=4, encoder_size=8, decoder_size=16,
                      attention_size=8, num_experts=2, expert_dim=8, gate_hidden=8, dropout=0.0)
    return TAMoEModel(cfg, rng=np.random.default_rng(seed))


class FakeClock:
    def __init__(self):
        self.t = 0.0

    def __call__(self):
        self.t += 1.0
        return self.t


def test_split_contract():
    with pytest.raises(SplitContractError):
        train(_model(), _samples(2, "a"), _samples(2, "a"), TrainSchedule(max_epochs=1),
              validate=lambda m: 0.0)


def test_lr_halves_after_stall_and_log_fields(tmp_path):
    scores = iter([1.0] + [0.5] * 8)
    res = train(_model(), _samples(4), _samples(2, "b"), TrainSchedule(max_epochs=9, batch_size=2),
                validate=lambda m: next(scores), log_path=tmp_path / "log.jsonl", clock=FakeClock())
    lrs = [r["lr"] for r in res.log]
    assert lrs[-1] == 0.25
    assert all(math.log2(x) == int(math.log2(x)) for x in lrs)
    best = [r["best_cider"] for r in res.log]
    assert best == sorted(best)
    lines = (tmp_path / "log.jsonl").read_text().splitlines()
    assert [json.loads(x)["epoch"] for x in lines] == list(range(1, 10))
    assert set(json.loads(lines[0])) >= {"epoch", "train_loss", "val_cider", "lr",
                                         "sampling_prob", "seconds"}


def test_identical_seed_identical_log_bytes(tmp_path):
    vocab = Vocabulary([f"w{i}" for i in range(8)])
    for k in range(2):
        train(_model(), _samples(6), _samples(2, "b", seed=1), TrainSchedule(max_epochs=3, batch_size=4),
              vocab=vocab, log_path=tmp_path / f"log{k}.jsonl", clock=FakeClock())
    assert (tmp_path / "log0.jsonl").read_bytes() == (tmp_path / "log1.jsonl").read_bytes()


def test_checkpoint_written_on_new_best(tmp_path):
    scores = iter([0.1, 0.3, 0.2])
    res = train(_model(), _samples(4), _samples(2, "b"), TrainSchedule(max_epochs=3, batch_size=4),
                validate=lambda m: next(scores), checkpoint_path=tmp_path / "best.ckpt")
    assert res.best_epoch == 2 and (tmp_path / "best.ckpt").exists()


def test_every_sample_visited_once_per_epoch(monkeypatch):
    seen = []
    m = _model()
    orig = m.loss_and_grad

    def spy(X, L, T, Y, **kw):
        seen.append(len(L))
        return orig(X, L, T, Y, **kw)

    monkeypatch.setattr(m, "loss_and_grad", spy)
    train(m, _samples(7), [], TrainSchedule(max_epochs=2, batch_size=3))
    assert seen == [3, 3, 1, 3, 3, 1]


def test_loss_trends_down_on_random_targets():
    # random features and targets: only the trend is checked here; the
    # structured synthetic memorization run lives in the harness tests
    res = train(_model(), _samples(10), [], TrainSchedule(max_epochs=30, batch_size=1))
    losses = [r["train_loss"] for r in res.log]
    assert losses[-1] < 0.8 * losses[0]
