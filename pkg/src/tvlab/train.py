"""Losses and training loops: MLM continuation/from-scratch pretraining,
ELECTRA-style joint generator/discriminator pretraining, and [CLS]-head
fine-tuning with best-validation model selection.

All loops are seed-deterministic: fixed (inputs, seed) reproduce the final
checkpoint bitwise.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import TweetRecord
from .errors import ConfigError, TrainingError
from .model.checkpoint import Checkpoint, extend_embeddings, init_model
from .model.config import ModelConfig
from .model.net import (
    cls_head_backward,
    cls_head_forward,
    disc_head_backward,
    disc_head_forward,
    encoder_backward,
    encoder_forward,
    binary_xent,
    log_softmax,
    make_dropout_mask,
    mlm_head_backward,
    mlm_head_forward,
    sigmoid,
    softmax,
    softmax_xent,
    zero_grads,
)
from .optim import Adam
from .tokenizer import (
    MASK_ID,
    NUM_SPECIALS,
    Vocab,
    audit_unknowns,
    augment_vocab,
    encode,
    vocab_fingerprint,
)

# Salt mixed into config.seed for the fixed perplexity-evaluation masking.
_EVAL_SEED_SALT = 0x7E5
_VAL_FRACTION = 0.1
_VAL_CAP = 1000


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters shared by the pretraining and
    fine-tuning loops. Defaults follow the batch-16 / Adam setup; use the
    factory methods for the task-appropriate learning rate."""

    batch_size: int = 16
    epochs: int = 7
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    mask_rate: float = 0.15
    mask_split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    disc_weight: float = 50.0
    seed: int = 0
    target_perplexity: float | None = None

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigError(f"batch_size={self.batch_size} must be >= 1")
        if self.epochs < 0:
            raise ConfigError(f"epochs={self.epochs} must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate={self.learning_rate} must be positive")
        if not 0.0 <= self.mask_rate < 1.0:
            raise ConfigError(f"mask_rate={self.mask_rate} must be in [0, 1)")
        if len(self.mask_split) != 3 or any(p < 0 for p in self.mask_split):
            raise ConfigError("mask_split must be three non-negative fractions")
        if abs(sum(self.mask_split) - 1.0) > 1e-9:
            raise ConfigError(f"mask_split must sum to 1, got {sum(self.mask_split)}")
        if self.disc_weight < 0:
            raise ConfigError(f"disc_weight={self.disc_weight} must be >= 0")
        if self.target_perplexity is not None and self.target_perplexity <= 0:
            raise ConfigError("target_perplexity must be positive")

    @classmethod
    def pretraining(cls, **kwargs) -> "TrainConfig":
        kwargs.setdefault("learning_rate", 1e-4)
        return cls(**kwargs)

    @classmethod
    def finetuning(cls, **kwargs) -> "TrainConfig":
        kwargs.setdefault("learning_rate", 5e-5)
        return cls(**kwargs)


@dataclass
class TrainLog:
    """Per-step losses, per-evaluation validation metric, and the index of
    the selected evaluation (argmax accuracy for fine-tuning, first
    evaluation at or under the target perplexity for pretraining; earliest
    on ties)."""

    metric_name: str
    losses: list[float] = field(default_factory=list)
    val_steps: list[int] = field(default_factory=list)
    val_metrics: list[float] = field(default_factory=list)
    selected_index: int = -1

    @property
    def selected_step(self) -> int:
        return self.val_steps[self.selected_index] if self.selected_index >= 0 else 0

    def to_tsv(self, path: str | Path) -> None:
        metric_at = dict(zip(self.val_steps, self.val_metrics))
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"step\tloss\t{self.metric_name}\n")
            for i, loss in enumerate(self.losses, start=1):
                metric = f"{metric_at[i]:.6f}" if i in metric_at else ""
                f.write(f"{i}\t{loss:.6f}\t{metric}\n")


# --- encoding helpers ---------------------------------------------------------

def encode_corpus(texts: list[str], vocab: Vocab, max_len: int):
    """Encode texts to (N, max_len) id and mask arrays."""
    ids = np.zeros((len(texts), max_len), dtype=np.int64)
    mask = np.zeros((len(texts), max_len), dtype=np.int64)
    for i, text in enumerate(texts):
        row_ids, row_mask = encode(text, vocab, max_len)
        ids[i] = row_ids
        mask[i] = row_mask
    return ids, mask


# --- masking ------------------------------------------------------------------

def _mask_sequence(ids: np.ndarray, vocab_size: int, config: TrainConfig,
                   rng: np.random.Generator):
    """BERT-style corruption of one sequence; returns (corrupted, pos->orig).

    Special tokens (ids 0..4) are never candidates. When the rate is
    positive and candidates exist, at least one position is selected so a
    masked-LM loss is always defined.
    """
    corrupted = ids.copy()
    targets: dict[int, int] = {}
    candidates = np.flatnonzero(ids >= NUM_SPECIALS)
    if candidates.size == 0 or config.mask_rate <= 0.0:
        return corrupted, targets
    selected = candidates[rng.random(candidates.size) < config.mask_rate]
    if selected.size == 0:
        selected = candidates[[rng.integers(candidates.size)]]
    p_mask, p_random, _ = config.mask_split
    u = rng.random(selected.size)
    for j, pos in enumerate(selected):
        targets[int(pos)] = int(ids[pos])
        if u[j] < p_mask:
            corrupted[pos] = MASK_ID
        elif u[j] < p_mask + p_random:
            corrupted[pos] = int(rng.integers(NUM_SPECIALS, vocab_size))
        # remaining fraction: keep the original token
    return corrupted, targets


def mask_tokens(ids, vocab: Vocab, config: TrainConfig, seed: int):
    """Corrupt one token-id sequence for masked-LM training."""
    rng = np.random.default_rng(seed)
    ids = np.asarray(ids, dtype=np.int64)
    return _mask_sequence(ids, len(vocab), config, rng)


def _mask_batch(ids: np.ndarray, vocab_size: int, config: TrainConfig,
                rng: np.random.Generator):
    """Mask every row of a batch; returns (corrupted, rows, cols, targets)."""
    corrupted = np.empty_like(ids)
    rows, cols, tgts = [], [], []
    for b in range(ids.shape[0]):
        corrupted[b], targets = _mask_sequence(ids[b], vocab_size, config, rng)
        for pos, orig in targets.items():
            rows.append(b)
            cols.append(pos)
            tgts.append(orig)
    return (
        corrupted,
        np.asarray(rows, dtype=np.int64),
        np.asarray(cols, dtype=np.int64),
        np.asarray(tgts, dtype=np.int64),
    )


# --- losses -------------------------------------------------------------------

def _mlm_loss_batch(params, config: ModelConfig, corrupted, mask, rows, cols, tgts):
    hidden, cache = encoder_forward(params, config, corrupted, mask)
    logits, head_cache = mlm_head_forward(params, hidden, rows, cols)
    loss, dlogits = softmax_xent(logits, tgts)
    grads = zero_grads(config, dtype=hidden.dtype)
    d_hidden = np.zeros_like(hidden)
    mlm_head_backward(params, head_cache, dlogits, grads, d_hidden)
    encoder_backward(params, config, cache, d_hidden, grads)
    return loss, grads


def mlm_loss(ckpt: Checkpoint, corrupted_ids, targets: dict[int, int], mask=None):
    """Mean cross-entropy over the masked positions of one sequence, plus
    gradients for every parameter tensor."""
    if not targets:
        raise TrainingError("no masked positions")
    ids = np.asarray(corrupted_ids, dtype=np.int64)[None, :]
    if mask is None:
        mask = (ids != 0).astype(np.int64)
    else:
        mask = np.asarray(mask, dtype=np.int64)[None, :]
    cols = np.asarray(sorted(targets), dtype=np.int64)
    rows = np.zeros_like(cols)
    tgts = np.asarray([targets[int(c)] for c in cols], dtype=np.int64)
    return _mlm_loss_batch(ckpt.tensors, ckpt.config, ids, mask, rows, cols, tgts)


def _sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of a (M, V) probability matrix."""
    cdf = probs.cumsum(axis=1)
    cdf[:, -1] = np.maximum(cdf[:, -1], 1.0)
    u = rng.random((probs.shape[0], 1))
    return np.argmax(cdf >= u, axis=1).astype(np.int64)


def _electra_loss_batch(gen_params, gen_config, disc_params, disc_config,
                        ids, mask, config: TrainConfig, rng):
    """Joint loss on one batch; returns (total, gen loss, disc loss,
    gen grads, disc grads, replaced-position stats)."""
    corrupted, rows, cols, tgts = _mask_batch(ids, gen_config.vocab_size, config, rng)
    if rows.size == 0:
        raise TrainingError("no masked positions in batch")

    gen_hidden, gen_cache = encoder_forward(gen_params, gen_config, corrupted, mask)
    gen_logits, gen_head_cache = mlm_head_forward(gen_params, gen_hidden, rows, cols)
    gen_loss, dlogits = softmax_xent(gen_logits, tgts)
    gen_grads = zero_grads(gen_config, dtype=gen_hidden.dtype)
    d_hidden = np.zeros_like(gen_hidden)
    mlm_head_backward(gen_params, gen_head_cache, dlogits, gen_grads, d_hidden)
    encoder_backward(gen_params, gen_config, gen_cache, d_hidden, gen_grads)

    # Replace the masked positions with generator samples; no gradient flows
    # through the sampling step.
    samples = _sample_rows(softmax(gen_logits), rng)
    disc_input = ids.copy()
    disc_input[rows, cols] = samples
    labels = (disc_input != ids).astype(np.float64)

    disc_hidden, disc_cache = encoder_forward(disc_params, disc_config, disc_input, mask)
    disc_logits, disc_head_cache = disc_head_forward(disc_params, disc_hidden)
    weights = mask.astype(disc_logits.dtype)
    disc_loss, d_disc_logits = binary_xent(disc_logits, labels.astype(disc_logits.dtype), weights)
    disc_grads = zero_grads(disc_config, dtype=disc_hidden.dtype)
    d_disc_hidden = np.zeros_like(disc_hidden)
    disc_head_backward(disc_params, disc_head_cache, d_disc_logits, disc_grads, d_disc_hidden)
    encoder_backward(disc_params, disc_config, disc_cache, d_disc_hidden, disc_grads)

    for name in disc_grads:
        disc_grads[name] *= config.disc_weight
    total = gen_loss + config.disc_weight * disc_loss
    return total, gen_loss, disc_loss, gen_grads, disc_grads, (disc_logits, labels, weights)


def electra_loss(generator: Checkpoint, discriminator: Checkpoint, ids,
                 config: TrainConfig, seed: int):
    """Generator MLM loss plus weighted discriminator BCE on one sequence.

    Returns (total loss, generator grads, discriminator grads). The
    discriminator grads are already scaled by the loss weight.
    """
    _check_shared_vocab(generator, discriminator)
    rng = np.random.default_rng(seed)
    ids = np.asarray(ids, dtype=np.int64)[None, :]
    mask = (ids != 0).astype(np.int64)
    total, _, _, gen_grads, disc_grads, _ = _electra_loss_batch(
        generator.tensors, generator.config,
        discriminator.tensors, discriminator.config,
        ids, mask, config, rng,
    )
    return total, gen_grads, disc_grads


def _check_shared_vocab(generator: Checkpoint, discriminator: Checkpoint) -> None:
    if generator.config.vocab_size != discriminator.config.vocab_size:
        raise TrainingError(
            "generator and discriminator vocabularies differ: "
            f"{generator.config.vocab_size} vs {discriminator.config.vocab_size}"
        )
    if (generator.vocab_fingerprint and discriminator.vocab_fingerprint
            and generator.vocab_fingerprint != discriminator.vocab_fingerprint):
        raise TrainingError("generator and discriminator vocab fingerprints differ")


# --- perplexity -----------------------------------------------------------------

def perplexity(ckpt: Checkpoint, encoded, config: TrainConfig) -> float:
    """exp(mean masked-token cross-entropy) with a fixed evaluation seed.

    ``encoded`` is an (ids, mask) pair of (N, T) arrays.
    """
    ids, mask = encoded
    ids = np.asarray(ids, dtype=np.int64)
    mask = np.asarray(mask, dtype=np.int64)
    if ids.shape[0] == 0:
        raise TrainingError("empty corpus")
    rng = np.random.default_rng([_EVAL_SEED_SALT, config.seed])
    total_nll = 0.0
    total_count = 0
    for start in range(0, ids.shape[0], max(config.batch_size, 16)):
        stop = start + max(config.batch_size, 16)
        corrupted, rows, cols, tgts = _mask_batch(ids[start:stop], ckpt.config.vocab_size,
                                                  config, rng)
        if rows.size == 0:
            continue
        hidden, _ = encoder_forward(ckpt.tensors, ckpt.config, corrupted, mask[start:stop])
        logits, _ = mlm_head_forward(ckpt.tensors, hidden, rows, cols)
        logp = log_softmax(logits)
        total_nll -= float(logp[np.arange(len(tgts)), tgts].sum())
        total_count += len(tgts)
    if total_count == 0:
        raise TrainingError("corpus has no maskable positions")
    return math.exp(total_nll / total_count)


# --- pretraining loops ---------------------------------------------------------

def _hold_out_validation(texts: list[str], seed: int):
    """Split texts into (train, validation) for perplexity tracking."""
    if len(texts) < 2:
        return texts, texts
    n_val = min(_VAL_CAP, max(1, int(len(texts) * _VAL_FRACTION)))
    rng = np.random.default_rng([seed, 0x5A1])
    val_idx = set(rng.choice(len(texts), size=n_val, replace=False).tolist())
    train = [t for i, t in enumerate(texts) if i not in val_idx]
    val = [t for i, t in enumerate(texts) if i in val_idx]
    return train, val


def pretrain_mlm(init: Checkpoint | ModelConfig, texts: list[str], vocab: Vocab,
                 config: TrainConfig, val_texts: list[str] | None = None):
    """Masked-LM pretraining (continuation or from scratch).

    Runs Adam over shuffled batches for ``config.epochs`` epochs, evaluating
    validation perplexity after each epoch, and stops early once
    ``config.target_perplexity`` is reached. Returns (checkpoint, log).
    """
    if isinstance(init, ModelConfig):
        ckpt = init_model(init, config.seed, vocab_fingerprint(vocab))
    else:
        if init.vocab_fingerprint and init.vocab_fingerprint != vocab_fingerprint(vocab):
            raise TrainingError("checkpoint vocab fingerprint does not match vocabulary")
        ckpt = init.copy()
        ckpt.vocab_fingerprint = vocab_fingerprint(vocab)
    if ckpt.config.vocab_size != len(vocab):
        raise TrainingError(
            f"model vocab_size={ckpt.config.vocab_size} != |vocab|={len(vocab)}"
        )

    log = TrainLog(metric_name="perplexity")
    if config.epochs == 0 or not texts:
        return ckpt, log

    if val_texts is None:
        texts, val_texts = _hold_out_validation(texts, config.seed)
    train_ids, train_mask = encode_corpus(texts, vocab, ckpt.config.max_len)
    val_encoded = encode_corpus(val_texts, vocab, ckpt.config.max_len)

    params = ckpt.tensors
    adam = Adam(params, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    rng = np.random.default_rng(config.seed)
    step = 0
    for _epoch in range(config.epochs):
        order = rng.permutation(train_ids.shape[0])
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            corrupted, rows, cols, tgts = _mask_batch(
                train_ids[batch], ckpt.config.vocab_size, config, rng
            )
            if rows.size == 0:
                continue
            loss, grads = _mlm_loss_batch(
                params, ckpt.config, corrupted, train_mask[batch], rows, cols, tgts
            )
            adam.step(params, grads)
            step += 1
            log.losses.append(loss)
        pp = perplexity(ckpt, val_encoded, config)
        log.val_steps.append(step)
        log.val_metrics.append(pp)
        if config.target_perplexity is not None and pp <= config.target_perplexity:
            log.selected_index = len(log.val_metrics) - 1
            break
    if log.selected_index < 0 and log.val_metrics:
        log.selected_index = len(log.val_metrics) - 1
    return ckpt, log


def pretrain_with_augmented_vocab(ckpt: Checkpoint, old_vocab: Vocab,
                                  texts: list[str], k: int, config: TrainConfig,
                                  val_texts: list[str] | None = None):
    """Audit unknowns, append the top-k emoticons, extend the embeddings,
    and run one more pretraining cycle with the new vocabulary.

    Returns (new vocab, checkpoint, log).
    """
    if ckpt.vocab_fingerprint != vocab_fingerprint(old_vocab):
        raise TrainingError("checkpoint vocab fingerprint does not match old vocabulary")
    audit = audit_unknowns(texts, old_vocab)
    new_vocab = augment_vocab(old_vocab, audit, k)
    extended = extend_embeddings(
        ckpt, len(new_vocab), config.seed, vocab_fingerprint(new_vocab)
    )
    trained, log = pretrain_mlm(extended, texts, new_vocab, config, val_texts)
    return new_vocab, trained, log


def electra_generator_config(disc_config: ModelConfig) -> ModelConfig:
    """Half-hidden generator matching the discriminator's vocabulary and
    sequence length."""
    hidden = max(disc_config.hidden_size // 2, disc_config.num_heads)
    heads = disc_config.num_heads if hidden % disc_config.num_heads == 0 else 1
    return dataclasses.replace(
        disc_config, hidden_size=hidden, embedding_size=0, ff_size=0, num_heads=heads
    )


def _disc_accuracy(disc: Checkpoint, logits_labels_weights) -> tuple[float, int]:
    logits, labels, weights = logits_labels_weights
    replaced = (labels > 0.5) & (weights > 0)
    if not replaced.any():
        return 1.0, 0
    preds = sigmoid(logits) > 0.5
    return float(preds[replaced].mean()), int(replaced.sum())


def electra_eval_accuracy(generator: Checkpoint, discriminator: Checkpoint,
                          encoded, config: TrainConfig) -> float:
    """Replaced-token detection accuracy on corruptions drawn with a fixed
    evaluation seed from the current generator."""
    ids, mask = encoded
    rng = np.random.default_rng([_EVAL_SEED_SALT, config.seed, 1])
    correct = 0
    total = 0
    for start in range(0, ids.shape[0], max(config.batch_size, 16)):
        stop = start + max(config.batch_size, 16)
        batch_ids, batch_mask = ids[start:stop], mask[start:stop]
        corrupted, rows, cols, _ = _mask_batch(batch_ids, generator.config.vocab_size,
                                               config, rng)
        if rows.size == 0:
            continue
        hidden, _ = encoder_forward(generator.tensors, generator.config, corrupted, batch_mask)
        logits, _ = mlm_head_forward(generator.tensors, hidden, rows, cols)
        samples = _sample_rows(softmax(logits), rng)
        disc_input = batch_ids.copy()
        disc_input[rows, cols] = samples
        labels = disc_input != batch_ids
        disc_hidden, _ = encoder_forward(discriminator.tensors, discriminator.config,
                                         disc_input, batch_mask)
        disc_logits, _ = disc_head_forward(discriminator.tensors, disc_hidden)
        replaced = labels & (batch_mask > 0)
        correct += int((sigmoid(disc_logits) > 0.5)[replaced].sum())
        total += int(replaced.sum())
    return correct / total if total else 1.0


def pretrain_electra(gen_config: ModelConfig, disc_config: ModelConfig,
                     texts: list[str], vocab: Vocab, config: TrainConfig,
                     val_texts: list[str] | None = None):
    """Joint generator/discriminator pretraining on pre-paired texts.

    Returns (discriminator checkpoint, log); the log metric is the
    replaced-token detection accuracy on the validation split.
    """
    fingerprint = vocab_fingerprint(vocab)
    generator = init_model(gen_config, config.seed, fingerprint)
    discriminator = init_model(disc_config, config.seed + 1, fingerprint)
    _check_shared_vocab(generator, discriminator)
    if gen_config.max_len != disc_config.max_len:
        raise TrainingError("generator and discriminator max_len differ")

    log = TrainLog(metric_name="disc_accuracy")
    if config.epochs == 0 or not texts:
        return discriminator, log

    if val_texts is None:
        texts, val_texts = _hold_out_validation(texts, config.seed)
    train_ids, train_mask = encode_corpus(texts, vocab, disc_config.max_len)
    val_encoded = encode_corpus(val_texts, vocab, disc_config.max_len)

    gen_adam = Adam(generator.tensors, config.learning_rate, config.beta1,
                    config.beta2, config.adam_eps)
    disc_adam = Adam(discriminator.tensors, config.learning_rate, config.beta1,
                     config.beta2, config.adam_eps)
    rng = np.random.default_rng(config.seed)
    step = 0
    for _epoch in range(config.epochs):
        order = rng.permutation(train_ids.shape[0])
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            try:
                total, _, _, gen_grads, disc_grads, _ = _electra_loss_batch(
                    generator.tensors, gen_config, discriminator.tensors, disc_config,
                    train_ids[batch], train_mask[batch], config, rng,
                )
            except TrainingError:
                continue
            gen_adam.step(generator.tensors, gen_grads)
            disc_adam.step(discriminator.tensors, disc_grads)
            step += 1
            log.losses.append(total)
        acc = electra_eval_accuracy(generator, discriminator, val_encoded, config)
        log.val_steps.append(step)
        log.val_metrics.append(acc)
    if log.val_metrics:
        log.selected_index = len(log.val_metrics) - 1
    return discriminator, log


# --- fine-tuning ----------------------------------------------------------------

def _require_labels(records: list[TweetRecord]) -> np.ndarray:
    labels = []
    for rec in records:
        if rec.label is None:
            raise TrainingError(f"unlabeled record '{rec.id}'")
        labels.append(int(rec.label))
    return np.asarray(labels, dtype=np.int64)


def classification_accuracy(ckpt: Checkpoint, encoded, labels: np.ndarray,
                            batch_size: int = 64) -> float:
    """Argmax accuracy in inference mode (ties go to the lowest class)."""
    ids, mask = encoded
    correct = 0
    for start in range(0, ids.shape[0], batch_size):
        stop = start + batch_size
        hidden, _ = encoder_forward(ckpt.tensors, ckpt.config, ids[start:stop], mask[start:stop])
        logits, _ = cls_head_forward(ckpt.tensors, hidden, None)
        correct += int((np.argmax(logits, axis=1) == labels[start:stop]).sum())
    return correct / ids.shape[0] if ids.shape[0] else 0.0


def finetune(ckpt: Checkpoint, train_records: list[TweetRecord],
             val_records: list[TweetRecord], config: TrainConfig, vocab: Vocab):
    """Supervised fine-tuning of the [CLS] softmax head plus the encoder.

    After each epoch the validation accuracy is logged; the returned
    checkpoint is the per-epoch snapshot with the highest validation
    accuracy (earliest epoch on ties).
    """
    train_labels = _require_labels(train_records)
    val_labels = _require_labels(val_records)
    current = ckpt.copy()
    log = TrainLog(metric_name="accuracy")
    if config.epochs == 0 or not train_records:
        return current, log

    max_len = current.config.max_len
    train_ids, train_mask = encode_corpus([r.text for r in train_records], vocab, max_len)
    val_encoded = encode_corpus([r.text for r in val_records], vocab, max_len)

    params = current.tensors
    adam = Adam(params, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    rng = np.random.default_rng(config.seed)
    dtype = params["cls.w"].dtype
    best: Checkpoint | None = None
    best_acc = -1.0
    step = 0
    for _epoch in range(config.epochs):
        order = rng.permutation(train_ids.shape[0])
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            hidden, cache = encoder_forward(params, current.config,
                                            train_ids[batch], train_mask[batch])
            dropout_mask = make_dropout_mask(
                rng, (len(batch), current.config.hidden_size), current.config.dropout, dtype
            )
            logits, head_cache = cls_head_forward(params, hidden, dropout_mask)
            loss, dlogits = softmax_xent(logits, train_labels[batch])
            grads = zero_grads(current.config, dtype=dtype)
            d_hidden = np.zeros_like(hidden)
            cls_head_backward(params, head_cache, dlogits, grads, d_hidden)
            encoder_backward(params, current.config, cache, d_hidden, grads)
            adam.step(params, grads)
            step += 1
            log.losses.append(loss)
        acc = classification_accuracy(current, val_encoded, val_labels)
        log.val_steps.append(step)
        log.val_metrics.append(acc)
        if acc > best_acc:
            best_acc = acc
            best = current.copy()
            log.selected_index = len(log.val_metrics) - 1
    assert best is not None
    return best, log
