"""End-to-end gradient certification on a tiny model."""

from __future__ import annotations

import numpy as np

from ..model import DropoutMaskSet, ModelConfig, TAMoEModel
from ..numerics import GradCheckReport, finite_difference_grad

# two captions of different lengths; 2 = EOS, 0 = PAD
TINY_TARGETS = np.array([[5, 6, 7, 2], [8, 9, 2, 0]])
TINY_LENGTHS = np.array([3, 2])


def tiny_config(family: str = "tamoe", num_experts: int = 2, dropout: float = 0.5) -> ModelConfig:
    return ModelConfig(vocab_size=20, feature_dim=5, embed_dim=12, encoder_size=8,
                       decoder_size=16, attention_size=8,
                       num_experts=num_experts if family == "tamoe" else 1, expert_dim=12,
                       gate_hidden=8, dropout=dropout, family=family)


def check_model_gradients(family: str = "tamoe", seed: int = 0, epsilon: float = 1e-5,
                          tolerance: float = 1e-4, config: ModelConfig | None = None,
                          scramble: bool = False) -> GradCheckReport:
    """Analytic float64 gradients of the full loss against central differences.

    The differences are taken on an extended-precision copy of the model:
    at the default init many gradient entries are ~1e-9, below what a
    float64 loss of order 10 can resolve with any usable step. Dropout
    masks are drawn once and held fixed for both routes. ``scramble`` moves
    the parameters to a random point away from the initialization.
    """
    cfg = config if config is not None else tiny_config(family)
    rng = np.random.default_rng(seed)
    model = TAMoEModel(cfg, rng=rng)
    if scramble:
        for p in model.params.values():
            v = p.value
            scale = 0.5 if v.ndim == 1 else 1 / np.sqrt(v.shape[-2])
            v[...] = rng.normal(0, scale, v.shape)
    n, m = TINY_TARGETS.shape[0], int(TINY_LENGTHS.max())
    X = rng.normal(size=(n, m, cfg.feature_dim))
    topics = rng.normal(size=(n, cfg.topic_dim))
    masks = DropoutMaskSet.sample(cfg, n, rng)
    model.loss_and_grad(X, TINY_LENGTHS, topics, TINY_TARGETS, masks=masks)

    wide = model.with_dtype("longdouble")
    for k, p in model.params.items():
        wide.params[k].grad = p.grad
    wide_masks = DropoutMaskSet(masks.decoder_input.astype(np.longdouble),
                                masks.experts.astype(np.longdouble))

    def loss():
        return wide.forward_teacher_forced(X, TINY_LENGTHS, topics, TINY_TARGETS,
                                           masks=wide_masks)["loss"]

    return finite_difference_grad(loss, wide.params, epsilon=epsilon, tolerance=tolerance)
