"""Small transformer encoder with MLM, discriminator, and [CLS] heads.

The functions here are the single-sequence API; training code uses the
batched internals in :mod:`tvlab.model.net` directly.
"""

from __future__ import annotations

import numpy as np

from ..errors import CheckpointError
from ..tokenizer import PAD_ID
from .checkpoint import (
    Checkpoint,
    extend_embeddings,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from .config import ModelConfig, layer_prefixes, manifest
from .net import (
    Params,
    cast_params,
    cls_head_forward,
    disc_head_forward,
    encoder_forward,
    make_dropout_mask,
    mlm_head_forward,
    softmax,
)

__all__ = [
    "Checkpoint",
    "ModelConfig",
    "classify_cls",
    "discriminator_logits",
    "encode_sequence",
    "extend_embeddings",
    "init_model",
    "layer_prefixes",
    "load_checkpoint",
    "manifest",
    "mlm_logits",
    "save_checkpoint",
]


def _as_batch(ids, mask):
    ids = np.asarray(ids, dtype=np.int64)
    if mask is None:
        mask = (ids != PAD_ID).astype(np.int64)
    else:
        mask = np.asarray(mask, dtype=np.int64)
    return ids[None, :], mask[None, :]


def encode_sequence(ckpt: Checkpoint, ids, mask=None) -> np.ndarray:
    """Final-layer hidden vectors (T, hidden) for one token-id sequence."""
    ids_b, mask_b = _as_batch(ids, mask)
    hidden, _ = encoder_forward(ckpt.tensors, ckpt.config, ids_b, mask_b)
    return hidden[0]


def mlm_logits(ckpt: Checkpoint, hidden: np.ndarray, positions) -> np.ndarray:
    """Vocabulary logits at the queried positions, shape (len(positions), V)."""
    positions = np.asarray(positions, dtype=np.int64)
    if positions.size and (positions.min() < 0 or positions.max() >= hidden.shape[0]):
        raise CheckpointError("mlm position out of sequence range")
    rows = np.zeros_like(positions)
    logits, _ = mlm_head_forward(ckpt.tensors, hidden[None, :, :], rows, positions)
    return logits


def discriminator_logits(ckpt: Checkpoint, hidden: np.ndarray) -> np.ndarray:
    """Per-position replaced-vs-original logit, shape (T,)."""
    logits, _ = disc_head_forward(ckpt.tensors, hidden[None, :, :])
    return logits[0]


def classify_cls(ckpt: Checkpoint, hidden: np.ndarray, training: bool = False,
                 seed: int = 0) -> np.ndarray:
    """3-class probabilities from the [CLS] vector at position 0.

    Dropout (rate from the config) applies to the [CLS] vector only when
    ``training`` is true, with a seed-deterministic mask.
    """
    dropout_mask = None
    if training:
        rng = np.random.default_rng(seed)
        dropout_mask = make_dropout_mask(
            rng, hidden.shape[-1:], ckpt.config.dropout, hidden.dtype
        )
    logits, _ = cls_head_forward(ckpt.tensors, hidden[None, :, :], dropout_mask)
    return softmax(logits)[0]
