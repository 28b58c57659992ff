# Beam search on a tiny random model, checked against brute-force enumeration
# of every sequence up to the length limit.
import itertools

import numpy as np

from tamoe.decoding import BANNED, beam_search, greedy_decode, score_tokens
from tamoe.model import ModelConfig, TAMoEModel
from tamoe.text import EOS_ID

V, L = 6, 4
cfg = ModelConfig(vocab_size=V, feature_dim=3, embed_dim=4, encoder_size=3, decoder_size=6,
                  attention_size=3, num_experts=2, expert_dim=4, gate_hidden=3, dropout=0.0,
                  max_len=L, init_scale=1.5)
rng = np.random.default_rng(3)
model = TAMoEModel(cfg, rng=rng)
X, topic = rng.normal(size=(3, 3)), rng.normal(size=8)

words = [w for w in range(V) if w not in BANNED]
best = (-np.inf, None)
for n in range(L):
    for body in itertools.product([w for w in words if w != EOS_ID], repeat=n):
        seq = list(body) + [EOS_ID]
        best = max(best, (score_tokens(model, X, topic, seq), seq), key=lambda t: t[0])
print("enumeration:", best[1], f"{best[0]:.4f}")

for B in (1, 2, 3, 5, 50):
    top = beam_search(model, X, topic, B)[0]
    print(f"B={B:3d}", top.tokens, f"{top.log_prob:.4f}", "finished" if top.finished else "open")
print("greedy:", greedy_decode(model, X, topic))
