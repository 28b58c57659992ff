import numpy as np
import pytest

from oracles import enumerate_sequences
from tamoe.decoding import (
    BANNED,
    beam_search,
    greedy_decode,
    greedy_decode_batch,
    read_decodes,
    score_tokens,
    write_decodes,
)
from tamoe.model import DropoutMaskSet, ModelConfig, TAMoEModel
from tamoe.numerics import log_softmax
from tamoe.text import BOS_ID, EOS_ID, PAD_ID, UNK_ID


def tiny(seed, vocab=6, scale=1.5):
    cfg = ModelConfig(vocab_size=vocab, feature_dim=3, embed_dim=4, encoder_size=3, decoder_size=6,
                      attention_size=3, num_experts=2, expert_dim=4, gate_hidden=3, dropout=0.0,
                      max_len=4, init_scale=scale)
    rng = np.random.default_rng(seed)
    m = TAMoEModel(cfg, rng=rng)
    return m, rng.normal(size=(3, 3)), rng.normal(size=8)


def prefix_scorer(m, X, topic):
    def score(prefix):
        ctx = m.start(X[None], None, topic[None])
        state = m.initial_state(1)
        masks = DropoutMaskSet.ones(m.config, 1)
        prev = BOS_ID
        for w in prefix + [None]:
            logits, state, _ = m.step(ctx, np.array([prev]), state, masks)
            prev = w
        logits = logits.copy()
        logits[:, list(BANNED)] = -np.inf
        return log_softmax(logits, axis=1)[0]
    return score


@pytest.mark.parametrize("seed", range(5))
def test_exhaustive_beam_finds_global_max(seed):
    m, X, topic = tiny(seed)
    (best_lp, best_seq), _ = enumerate_sequences(prefix_scorer(m, X, topic), 6, 4,
                                                 BANNED, EOS_ID)
    hyps = beam_search(m, X, topic, beam_size=6 ** 4, max_len=4)
    assert hyps[0].finished
    assert hyps[0].tokens == best_seq
    assert hyps[0].log_prob == pytest.approx(best_lp, abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_beam_one_equals_greedy(seed):
    m, X, topic = tiny(seed)
    assert beam_search(m, X, topic, 1)[0].words == greedy_decode(m, X, topic)


@pytest.mark.parametrize("seed", range(10))
def test_best_score_non_decreasing_in_beam(seed):
    m, X, topic = tiny(seed, vocab=9)
    # compare finished captions only; an unfinished pad-out is not a caption
    best = []
    for b in (1, 2, 3, 5, 8):
        fin = [h.log_prob for h in beam_search(m, X, topic, b) if h.finished]
        best.append(max(fin, default=-np.inf))
    assert all(b2 >= b1 - 1e-12 for b1, b2 in zip(best, best[1:])), best


@pytest.mark.parametrize("seed", range(5))
def test_stored_scores_match_rescoring_and_no_banned_tokens(seed):
    m, X, topic = tiny(seed, vocab=9)
    for hyp in beam_search(m, X, topic, 5):
        assert hyp.log_prob == pytest.approx(score_tokens(m, X, topic, hyp.tokens), abs=1e-9)
        assert not set(hyp.tokens) & {PAD_ID, BOS_ID, UNK_ID}
        assert len(hyp.tokens) <= m.config.max_len


def test_eos_first_gives_empty_caption():
    m, X, topic = tiny(0)
    # make the output head put all mass on EOS
    m.params["embed_special"].value[...] = 0
    m.params["embed_words"].value[...] = 0
    m.params["embed_special"].value[EOS_ID - 1] = 1.0
    m.params["proj_P"].value[...] = 1.0
    m.params["exp_b"].value[...] = 5.0
    assert greedy_decode(m, X, topic) == []
    top = beam_search(m, X, topic, 3)[0]
    assert top.tokens == [EOS_ID] and top.words == []


def test_greedy_deterministic_and_batch_consistent():
    m, X, topic = tiny(1, vocab=9)
    a = greedy_decode(m, X, topic)
    assert a == greedy_decode(m, X, topic)
    Xb = np.stack([X, np.pad(X[:2], ((0, 1), (0, 0)))])
    out = greedy_decode_batch(m, Xb, np.array([3, 2]), np.stack([topic, topic]))
    assert out[0] == a
    assert out[1] == greedy_decode(m, X[:2], topic)


def test_length_norm_flag_changes_ranking_key():
    m, X, topic = tiny(2, vocab=9)
    hyps = beam_search(m, X, topic, 5, length_norm=True)
    fin = [h for h in hyps if h.finished]
    keys = [h.log_prob / len(h.tokens) for h in fin]
    assert keys == sorted(keys, reverse=True)


def test_bad_beam_size():
    m, X, topic = tiny(0)
    with pytest.raises(ValueError):
        beam_search(m, X, topic, 0)


def test_decode_file_round_trip(tmp_path):
    recs = [{"video_id": "v1", "caption": "a man", "log_prob": -1.5},
            {"video_id": "v2", "caption": "", "log_prob": None}]
    write_decodes(tmp_path / "d.jsonl", recs)
    assert read_decodes(tmp_path / "d.jsonl") == recs
