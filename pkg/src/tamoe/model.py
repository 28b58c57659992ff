"""Topic-aware mixture-of-experts captioner with hand-written backprop.

Layout (row-vector convention, ``x @ W``):

    features --biLSTM--> H_enc (N, M, 2*He)
    for each step t:
        c_t   = additive attention over H_enc keyed on h_{t-1}
        x_t   = [embed(w_{t-1}) ; c_t ; topic] * input_mask
        h_t   = LSTM(x_t, h_{t-1})
        o_t   = sum_s beta_s * (relu(h_t @ A_s + b_s) * expert_mask_s)
        logit = (o_t @ P) @ E.T          # reverse embedding, E tied with input
    beta = softmax(MLP(topic) / tau)     # once per sample

Families: ``tamoe`` (gated experts), ``topic`` (one expert, no gate) and
``base`` (one expert, no gate, topic input zeroed).
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, fields

import numpy as np

from .numerics import (
    DimensionError,
    Parameter,
    log_softmax,
    sigmoid,
    softmax_backward,
    softmax_with_temperature,
)
from .text import BOS_ID, PAD_ID, RESERVED, UNK_ID

FAMILIES = ("base", "topic", "tamoe")
N_SPECIAL = len(RESERVED)


@dataclass
class ModelConfig:
    vocab_size: int = 0
    feature_dim: int = 1024
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
    family: str = "tamoe"
    use_video: bool = True
    init_scale: float = 0.1
    forget_bias: float = 1.0
    dtype: str = "float64"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.family != "tamoe" and self.num_experts != 1:
            raise ValueError(f"the {self.family} family has exactly one expert")
        for name in ("feature_dim", "embed_dim", "encoder_size", "decoder_size",
                     "attention_size", "num_experts", "expert_dim", "gate_hidden",
                     "max_features", "max_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.vocab_size <= N_SPECIAL:
            raise ValueError("vocab_size must exceed the reserved tokens")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.dtype not in ("float64", "float32", "longdouble"):
            raise ValueError("dtype must be float64, float32 or longdouble")

    @property
    def topic_dim(self):
        return 2 * self.embed_dim

    @property
    def decoder_input_dim(self):
        return self.embed_dim + 2 * self.encoder_size + 2 * self.embed_dim

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class DropoutMaskSet:
    """Per-sample masks, pre-scaled by 1/(1-p), reused at every time step."""

    decoder_input: np.ndarray  # (N, decoder_input_dim)
    experts: np.ndarray        # (N, S, expert_dim)

    @classmethod
    def sample(cls, config: ModelConfig, n: int, rng):
        keep = 1.0 - config.dropout
        dt = np.dtype(config.dtype)

        def draw(shape):
            if config.dropout == 0:
                return np.ones(shape, dtype=dt)
            return ((rng.random(shape) < keep) / keep).astype(dt)

        return cls(draw((n, config.decoder_input_dim)),
                   draw((n, config.num_experts, config.expert_dim)))

    @classmethod
    def ones(cls, config: ModelConfig, n: int):
        dt = np.dtype(config.dtype)
        return cls(np.ones((n, config.decoder_input_dim), dtype=dt),
                   np.ones((n, config.num_experts, config.expert_dim), dtype=dt))

    def take(self, rows):
        return DropoutMaskSet(self.decoder_input[rows], self.experts[rows])


# ---------------------------------------------------------------------------
# LSTM cell


def lstm_step(x, h, c, Wx, Wh, b):
    """One LSTM step; gate order is input, forget, output, candidate."""
    H = h.shape[-1]
    a = x @ Wx + h @ Wh + b
    i = sigmoid(a[:, :H])
    f = sigmoid(a[:, H:2 * H])
    o = sigmoid(a[:, 2 * H:3 * H])
    g = np.tanh(a[:, 3 * H:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (x, h, c, i, f, o, g, tc)


def lstm_step_backward(dh, dc, cache, Wx, Wh):
    x, h, c, i, f, o, g, tc = cache
    do = dh * tc
    dct = dc + dh * o * (1.0 - tc * tc)
    da = np.concatenate([
        dct * g * i * (1.0 - i),
        dct * c * f * (1.0 - f),
        do * o * (1.0 - o),
        dct * i * (1.0 - g * g),
    ], axis=1)
    return da @ Wx.T, da @ Wh.T, dct * f, x.T @ da, h.T @ da, da.sum(0)


def _reverse_index(lengths, M):
    """Gather index that reverses each row's valid prefix; an involution."""
    t = np.arange(M)[None, :]
    L = np.asarray(lengths)[:, None]
    return np.where(t < L, L - 1 - t, t)


class TAMoEModel:
    """Parameters plus forward/backward passes of the captioner."""

    def __init__(self, config: ModelConfig, embeddings=None, frozen_embeddings: bool = False,
                 rng=None):
        self.config = cfg = config
        rng = rng if rng is not None else np.random.default_rng(0)
        dt = np.dtype(cfg.dtype)
        s = cfg.init_scale

        def u(*shape):
            return rng.uniform(-s, s, size=shape).astype(dt)

        He, Hd, D, A = cfg.encoder_size, cfg.decoder_size, cfg.embed_dim, cfg.attention_size
        p = {}
        for d in ("enc_f", "enc_b"):
            p[d + "_Wx"] = u(cfg.feature_dim, 4 * He)
            p[d + "_Wh"] = u(He, 4 * He)
            b = u(4 * He)
            b[He:2 * He] = cfg.forget_bias
            p[d + "_b"] = b
        p["att_Wh"] = u(Hd, A)
        p["att_We"] = u(2 * He, A)
        p["att_v"] = u(A)
        p["dec_Wx"] = u(cfg.decoder_input_dim, 4 * Hd)
        p["dec_Wh"] = u(Hd, 4 * Hd)
        b = u(4 * Hd)
        b[Hd:2 * Hd] = cfg.forget_bias
        p["dec_b"] = b
        p["exp_A"] = u(cfg.num_experts, Hd, cfg.expert_dim)
        p["exp_b"] = u(cfg.num_experts, cfg.expert_dim)
        if cfg.family == "tamoe":
            p["gate_W1"] = u(cfg.topic_dim, cfg.gate_hidden)
            p["gate_b1"] = u(cfg.gate_hidden)
            p["gate_W2"] = u(cfg.gate_hidden, cfg.num_experts)
            p["gate_b2"] = u(cfg.num_experts)
        p["proj_P"] = u(cfg.expert_dim, D)
        if embeddings is None:
            table = u(cfg.vocab_size, D)
        else:
            table = np.asarray(embeddings, dtype=dt)
            if table.shape != (cfg.vocab_size, D):
                raise DimensionError(
                    f"embedding table {table.shape} != ({cfg.vocab_size}, {D})")
        p["embed_special"] = table[1:N_SPECIAL].copy()
        p["embed_words"] = table[N_SPECIAL:].copy()
        self.params = {k: Parameter(np.ascontiguousarray(v)) for k, v in p.items()}
        self.params["embed_words"].frozen = frozen_embeddings

    # -- helpers ---------------------------------------------------------

    def __getitem__(self, name):
        return self.params[name].value

    def with_dtype(self, dtype: str) -> "TAMoEModel":
        """A copy whose config and parameters use ``dtype``."""
        cfg = ModelConfig.from_dict({**asdict(self.config), "dtype": dtype})
        other = TAMoEModel.__new__(TAMoEModel)
        other.config = cfg
        other.params = {k: Parameter(p.value.astype(dtype), frozen=p.frozen)
                        for k, p in self.params.items()}
        return other

    def zero_grad(self):
        for prm in self.params.values():
            prm.zero_grad()

    def embedding_matrix(self):
        """Full |V| x D table: zero PAD row, trainable specials, word rows."""
        sp = self["embed_special"]
        return np.concatenate([np.zeros((1, sp.shape[1]), dtype=sp.dtype), sp,
                               self["embed_words"]])

    def _accumulate_embedding(self, dE):
        self.params["embed_special"].accumulate(dE[1:N_SPECIAL])
        self.params["embed_words"].accumulate(dE[N_SPECIAL:])

    def _as_batch(self, features, lengths=None):
        dt = np.dtype(self.config.dtype)
        x = np.asarray(features, dtype=dt)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[2] != self.config.feature_dim:
            raise DimensionError(
                f"features must be (N, M, {self.config.feature_dim}), got {np.shape(features)}")
        if lengths is None:
            lengths = np.full(x.shape[0], x.shape[1])
        lengths = np.asarray(lengths, dtype=int)
        if np.any(lengths < 1):
            raise ValueError("every sample needs at least one feature segment")
        if np.any(lengths > self.config.max_features) or np.any(lengths > x.shape[1]):
            raise ValueError(f"feature count exceeds {self.config.max_features}; subsample first")
        return x, lengths

    def _topics(self, topics, n):
        dt = np.dtype(self.config.dtype)
        t = np.asarray(topics, dtype=dt)
        if t.ndim == 1:
            t = np.broadcast_to(t, (n, t.shape[0]))
        if t.shape != (n, self.config.topic_dim):
            raise DimensionError(f"topic segment must be (N, {self.config.topic_dim}), got {t.shape}")
        if self.config.family == "base":
            t = np.zeros_like(t)
        return np.ascontiguousarray(t)

    # -- encoder ---------------------------------------------------------

    def _run_lstm(self, X, prefix):
        N, M, _ = X.shape
        Wx, Wh, b = self[prefix + "_Wx"], self[prefix + "_Wh"], self[prefix + "_b"]
        H = Wh.shape[0]
        h = np.zeros((N, H), dtype=X.dtype)
        c = np.zeros_like(h)
        out = np.empty((N, M, H), dtype=X.dtype)
        caches = []
        for t in range(M):
            h, c, cache = lstm_step(X[:, t], h, c, Wx, Wh, b)
            out[:, t] = h
            caches.append(cache)
        return out, caches

    def _run_lstm_backward(self, dout, caches, prefix):
        Wx, Wh = self[prefix + "_Wx"], self[prefix + "_Wh"]
        N, M, H = dout.shape
        dX = np.empty((N, M, Wx.shape[0]), dtype=dout.dtype)
        dWx, dWh = np.zeros_like(Wx), np.zeros_like(Wh)
        db = np.zeros(4 * H, dtype=dout.dtype)
        dh = np.zeros((N, H), dtype=dout.dtype)
        dc = np.zeros_like(dh)
        for t in reversed(range(M)):
            dx, dh, dc, gWx, gWh, gb = lstm_step_backward(dh + dout[:, t], dc, caches[t], Wx, Wh)
            dX[:, t] = dx
            dWx += gWx
            dWh += gWh
            db += gb
        self.params[prefix + "_Wx"].accumulate(dWx)
        self.params[prefix + "_Wh"].accumulate(dWh)
        self.params[prefix + "_b"].accumulate(db)
        return dX

    def encode(self, features, lengths=None):
        """Bidirectional encoding; returns ``(H_enc, cache)`` with H_enc (N, M, 2*He).

        Padded positions (``t >= length``) hold junk and must be masked by
        the caller; the backward direction runs over each valid prefix only.
        """
        X, lengths = self._as_batch(features, lengths)
        N, M, _ = X.shape
        Hf, cf = self._run_lstm(X, "enc_f")
        rows = np.arange(N)[:, None]
        rev = _reverse_index(lengths, M)
        Hb_rev, cb = self._run_lstm(X[rows, rev], "enc_b")
        Hb = Hb_rev[rows, rev]
        return np.concatenate([Hf, Hb], axis=2), (cf, cb, rev, lengths)

    def encode_backward(self, dH, cache):
        cf, cb, rev, _ = cache
        He = self.config.encoder_size
        rows = np.arange(dH.shape[0])[:, None]
        self._run_lstm_backward(dH[:, :, :He], cf, "enc_f")
        self._run_lstm_backward(dH[:, :, He:][rows, rev], cb, "enc_b")

    # -- gate --------------------------------------------------------------

    def gate(self, topics, tau=None):
        """Expert weights from the topic embedding alone: (N, S) on the simplex."""
        cfg = self.config
        tau = cfg.temperature if tau is None else tau
        topics = np.atleast_2d(topics)
        n = topics.shape[0]
        if cfg.family != "tamoe":
            return np.ones((n, 1), dtype=np.dtype(cfg.dtype)), None
        hid = np.tanh(topics @ self["gate_W1"] + self["gate_b1"])
        g = hid @ self["gate_W2"] + self["gate_b2"]
        beta, smc = softmax_with_temperature(g, tau, axis=1)
        return beta.astype(topics.dtype, copy=False), (topics, hid, smc)

    def gate_backward(self, dbeta, cache):
        if cache is None:
            return
        topics, hid, smc = cache
        dg = softmax_backward(dbeta, smc)
        self.params["gate_W2"].accumulate(hid.T @ dg)
        self.params["gate_b2"].accumulate(dg.sum(0))
        dpre = (dg @ self["gate_W2"].T) * (1.0 - hid * hid)
        self.params["gate_W1"].accumulate(topics.T @ dpre)
        self.params["gate_b1"].accumulate(dpre.sum(0))

    # -- per-step pieces ---------------------------------------------------

    def attend(self, h_prev, H_enc, Pe, valid):
        """Additive attention; returns ``(context, alpha, cache)``."""
        u = np.tanh(Pe + (h_prev @ self["att_Wh"])[:, None, :])
        e = u @ self["att_v"]
        e = np.where(valid, e, -np.inf)
        alpha, _ = softmax_with_temperature(e, 1.0, axis=1)
        alpha = alpha.astype(H_enc.dtype, copy=False)
        ctx = np.einsum("nm,nmk->nk", alpha, H_enc)
        return ctx, alpha, (h_prev, u, alpha)

    def attend_backward(self, dctx, cache, H_enc):
        h_prev, u, alpha = cache
        dalpha = np.einsum("nk,nmk->nm", dctx, H_enc)
        dH = alpha[:, :, None] * dctx[:, None, :]
        de = alpha * (dalpha - np.sum(alpha * dalpha, axis=1, keepdims=True))
        self.params["att_v"].accumulate(np.einsum("nm,nma->a", de, u))
        dpre = de[:, :, None] * self["att_v"] * (1.0 - u * u)
        ds = dpre.sum(1)
        self.params["att_Wh"].accumulate(h_prev.T @ ds)
        return ds @ self["att_Wh"].T, dH, dpre

    def moe_forward(self, h, beta, expert_mask):
        """Gated sum of masked ReLU experts; returns ``(o, cache)``."""
        z = np.einsum("nh,she->nse", h, self["exp_A"]) + self["exp_b"]
        E = np.maximum(z, 0.0)
        Em = E * expert_mask
        if self.config.family == "tamoe":
            o = (beta[:, :, None] * Em).sum(1)
        else:
            o = Em[:, 0]
        return o, (h, z, Em, expert_mask, beta)

    def moe_backward(self, do, cache):
        h, z, Em, mask, beta = cache
        if self.config.family == "tamoe":
            dbeta = np.einsum("ne,nse->ns", do, Em)
            dEm = beta[:, :, None] * do[:, None, :]
        else:
            dbeta = None
            dEm = do[:, None, :]
        dz = dEm * mask * (z > 0)
        self.params["exp_A"].accumulate(np.einsum("nh,nse->she", h, dz))
        self.params["exp_b"].accumulate(dz.sum(0))
        return np.einsum("nse,she->nh", dz, self["exp_A"]), dbeta

    def output_logits(self, o, E=None):
        E = self.embedding_matrix() if E is None else E
        q = o @ self["proj_P"]
        return q @ E.T, q

    # -- full step -----------------------------------------------------------

    def start(self, features, lengths, topics):
        """Encoder pass plus gate; everything a decoder step needs."""
        cfg = self.config
        X, lengths = self._as_batch(features, lengths)
        N, M, _ = X.shape
        topics = self._topics(topics, N)
        beta, gcache = self.gate(topics)
        if cfg.use_video:
            H_enc, ecache = self.encode(X, lengths)
            Pe = H_enc @ self["att_We"]
        else:
            H_enc = np.zeros((N, M, 2 * cfg.encoder_size), dtype=X.dtype)
            ecache, Pe = None, None
        valid = np.arange(M)[None, :] < lengths[:, None]
        return {"H": H_enc, "Pe": Pe, "valid": valid, "topics": topics, "beta": beta,
                "gate_cache": gcache, "enc_cache": ecache, "n": N}

    def initial_state(self, n):
        z = np.zeros((n, self.config.decoder_size), dtype=np.dtype(self.config.dtype))
        return z, z.copy()

    def step(self, ctx, tokens, state, masks: DropoutMaskSet, rows=None, E=None):
        """One decoder step for a batch of rows of ``ctx``.

        Returns ``(logits, (h, c), cache)``; ``rows`` selects context rows per
        hypothesis (beam search feeds one video's context to many rows).
        """
        cfg = self.config
        E = self.embedding_matrix() if E is None else E
        h_prev, c_prev = state
        sel = slice(None) if rows is None else rows
        tokens = np.asarray(tokens)
        wemb = E[tokens]
        if cfg.use_video:
            H = ctx["H"][sel]
            cvec, alpha, acache = self.attend(h_prev, H, ctx["Pe"][sel], ctx["valid"][sel])
        else:
            cvec = np.zeros((h_prev.shape[0], 2 * cfg.encoder_size), dtype=h_prev.dtype)
            alpha, acache = None, None
        x_raw = np.concatenate([wemb, cvec, ctx["topics"][sel]], axis=1)
        x = x_raw * masks.decoder_input
        h, c, lcache = lstm_step(x, h_prev, c_prev, self["dec_Wx"], self["dec_Wh"], self["dec_b"])
        o, mcache = self.moe_forward(h, ctx["beta"][sel], masks.experts)
        logits, q = self.output_logits(o, E)
        cache = {"tokens": tokens, "acache": acache, "alpha": alpha, "x_raw": x_raw,
                 "in_mask": masks.decoder_input, "lcache": lcache, "mcache": mcache,
                 "o": o, "q": q}
        return logits, (h, c), cache

    # -- teacher forcing -------------------------------------------------------

    def forward_teacher_forced(self, features, lengths, topics, targets, masks=None,
                               sampling_prob: float = 1.0, rng=None):
        """Cross-entropy of gold ``targets`` (N, T) with PAD steps excluded.

        At step t the input token is the gold token t-1 with probability
        ``sampling_prob``, otherwise the previous step's argmax. ``loss`` is
        summed over time and averaged over the batch.
        """
        cfg = self.config
        targets = np.atleast_2d(np.asarray(targets, dtype=int))
        N, T = targets.shape
        if T == 0 or not np.any(targets != PAD_ID):
            raise ValueError("empty gold sequence")
        if T > cfg.max_len:
            raise ValueError(f"gold sequence longer than {cfg.max_len}")
        if sampling_prob < 1.0 and rng is None:
            raise ValueError("schedule sampling needs an rng")
        ctx = self.start(features, lengths, topics)
        if ctx["n"] != N:
            raise DimensionError(f"{ctx['n']} feature rows but {N} target rows")
        masks = masks if masks is not None else DropoutMaskSet.ones(cfg, N)
        E = self.embedding_matrix()
        state = self.initial_state(N)
        tok = np.full(N, BOS_ID)
        valid = targets != PAD_ID
        steps, all_logits = [], []
        loss = 0.0
        for t in range(T):
            if t > 0:
                tok = targets[:, t - 1].copy()
                if sampling_prob < 1.0:
                    swap = rng.random(N) >= sampling_prob
                    masked = all_logits[-1].copy()
                    masked[:, [PAD_ID, BOS_ID, UNK_ID]] = -np.inf
                    tok[swap] = masked[swap].argmax(1)
            logits, state, cache = self.step(ctx, tok, state, masks, E=E)
            logp = log_softmax(logits, axis=1)
            y = targets[:, t]
            loss -= np.sum(logp[np.arange(N), y] * valid[:, t]) / N
            cache["probs"] = np.exp(logp)
            cache["y"] = y
            cache["valid"] = valid[:, t]
            steps.append(cache)
            all_logits.append(logits)
        n_tok = int(valid.sum())
        return {"loss": loss, "per_token_loss": float(loss) * N / n_tok,
                "logits": np.stack(all_logits, axis=1), "ctx": ctx, "steps": steps,
                "E": E, "n": N}

    def backward(self, result):
        """Accumulate d(loss)/d(params) into every Parameter's ``grad``."""
        cfg = self.config
        ctx, steps, E, N = result["ctx"], result["steps"], result["E"], result["n"]
        dE = np.zeros_like(E)
        P = self["proj_P"]
        dP = np.zeros_like(P)
        Hd = cfg.decoder_size
        dh_next = np.zeros((N, Hd), dtype=E.dtype)
        dc_next = np.zeros_like(dh_next)
        dbeta = np.zeros_like(ctx["beta"])
        dH = np.zeros_like(ctx["H"])
        dPe = np.zeros_like(ctx["H"][:, :, :1]) if ctx["Pe"] is None else np.zeros_like(ctx["Pe"])
        D, He = cfg.embed_dim, cfg.encoder_size
        dWx = np.zeros_like(self["dec_Wx"])
        dWh = np.zeros_like(self["dec_Wh"])
        db = np.zeros_like(self["dec_b"])
        for cache in reversed(steps):
            dlogits = cache["probs"].copy()
            dlogits[np.arange(N), cache["y"]] -= 1.0
            dlogits *= cache["valid"][:, None] / N
            dq = dlogits @ E
            dE += dlogits.T @ cache["q"]
            dP += cache["o"].T @ dq
            do = dq @ P.T
            dh, db_ = self.moe_backward(do, cache["mcache"])
            if db_ is not None:
                dbeta += db_
            dx, dh_prev, dc_next, gWx, gWh, gb = lstm_step_backward(
                dh + dh_next, dc_next, cache["lcache"], self["dec_Wx"], self["dec_Wh"])
            dWx += gWx
            dWh += gWh
            db += gb
            dx_raw = dx * cache["in_mask"]
            np.add.at(dE, cache["tokens"], dx_raw[:, :D])
            if cfg.use_video:
                dh_att, dH_att, dpre = self.attend_backward(dx_raw[:, D:D + 2 * He],
                                                            cache["acache"], ctx["H"])
                dh_prev = dh_prev + dh_att
                dH += dH_att
                dPe += dpre
            dh_next = dh_prev
        self.params["dec_Wx"].accumulate(dWx)
        self.params["dec_Wh"].accumulate(dWh)
        self.params["dec_b"].accumulate(db)
        self.params["proj_P"].accumulate(dP)
        self._accumulate_embedding(dE)
        self.gate_backward(dbeta, ctx["gate_cache"])
        if cfg.use_video:
            H = ctx["H"]
            self.params["att_We"].accumulate(
                H.reshape(-1, H.shape[2]).T @ dPe.reshape(-1, dPe.shape[2]))
            dH += dPe @ self["att_We"].T
            self.encode_backward(dH, ctx["enc_cache"])

    def loss_and_grad(self, *args, **kwargs):
        self.zero_grad()
        result = self.forward_teacher_forced(*args, **kwargs)
        self.backward(result)
        return result

    # -- checkpoints -----------------------------------------------------------

    def save(self, path, vocab_digest: bytes = b"\0" * 32):
        write_checkpoint(path, self, vocab_digest)

    @classmethod
    def load(cls, path, vocab_digest: bytes | None = None):
        return read_checkpoint(path, vocab_digest)


# ---------------------------------------------------------------------------
# checkpoint container
#
#   b"TAMC" | u32 version | u32 len | config JSON | 32-byte vocab digest |
#   u32 n_params | per param: u16 name_len, name, u8 frozen, u32 ndim,
#   u32 dims..., float64 little-endian payload

CHECKPOINT_MAGIC = b"TAMC"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def write_checkpoint(path, model: TAMoEModel, vocab_digest: bytes):
    if len(vocab_digest) != 32:
        raise CheckpointError("vocabulary digest must be 32 bytes")
    buf = io.BytesIO()
    cfg = json.dumps(asdict(model.config), sort_keys=True).encode()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(cfg)))
    buf.write(cfg)
    buf.write(vocab_digest)
    buf.write(struct.pack("<I", len(model.params)))
    for name, prm in model.params.items():
        nb = name.encode()
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<BI", int(prm.frozen), prm.value.ndim))
        buf.write(struct.pack(f"<{prm.value.ndim}I", *prm.value.shape))
        buf.write(np.ascontiguousarray(prm.value, dtype="<f8").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def read_checkpoint(path, vocab_digest: bytes | None = None) -> TAMoEModel:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint")
    version, n = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    cfg = ModelConfig.from_dict(json.loads(data[off:off + n]))
    off += n
    digest = data[off:off + 32]
    off += 32
    if vocab_digest is not None and digest != vocab_digest:
        raise CheckpointError(f"{path}: vocabulary mismatch")
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    model = TAMoEModel(cfg)
    for _ in range(count):
        (ln,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + ln].decode()
        off += ln
        frozen, ndim = struct.unpack_from("<BI", data, off)
        off += 5
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape)
        off += 8 * size
        if name not in model.params or model.params[name].shape != tuple(shape):
            raise CheckpointError(f"{path}: unexpected parameter {name} {shape}")
        model.params[name] = Parameter(arr.astype(cfg.dtype), frozen=bool(frozen))
    model.vocab_digest = digest
    return model
