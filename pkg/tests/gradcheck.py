"""Finite-difference gradient oracle shared by the unit and acceptance tests.

The oracle is independent of the analytic backward pass: it only calls the
forward functions. A combined loss (MLM + discriminator + classifier heads
on one encoder forward) touches every parameter tensor of the model.
"""

import numpy as np

from tvlab.model import ModelConfig, init_model
from tvlab.model.net import (
    Params,
    binary_xent,
    cast_params,
    cls_head_backward,
    cls_head_forward,
    disc_head_backward,
    disc_head_forward,
    encoder_backward,
    encoder_forward,
    make_dropout_mask,
    mlm_head_backward,
    mlm_head_forward,
    softmax_xent,
    zero_grads,
)
from tvlab.tokenizer import CLS_ID, NUM_SPECIALS, SEP_ID


def build_inputs(config: ModelConfig, seed: int) -> dict:
    """Random batch of two sequences (one padded) plus head targets."""
    rng = np.random.default_rng(seed)
    T = config.max_len
    real = T - 3  # row 1 keeps three padding positions
    ids = np.zeros((2, T), dtype=np.int64)
    ids[0] = rng.integers(NUM_SPECIALS, config.vocab_size, T)
    ids[0, 0], ids[0, -1] = CLS_ID, SEP_ID
    ids[1, :real] = rng.integers(NUM_SPECIALS, config.vocab_size, real)
    ids[1, 0], ids[1, real - 1] = CLS_ID, SEP_ID
    mask = (np.arange(T)[None, :] < np.array([[T], [real]])).astype(np.int64)

    rows = np.array([0, 0, 1], dtype=np.int64)
    cols = np.array([1, T - 2, 1], dtype=np.int64)
    mlm_targets = rng.integers(NUM_SPECIALS, config.vocab_size, rows.size)
    disc_labels = (rng.random((2, T)) < 0.3).astype(np.float64) * mask
    cls_targets = rng.integers(0, config.num_classes, 2)
    dropout_mask = make_dropout_mask(
        rng, (2, config.hidden_size), config.dropout, np.float64
    )
    return dict(
        ids=ids, mask=mask, rows=rows, cols=cols, mlm_targets=mlm_targets,
        disc_labels=disc_labels, cls_targets=cls_targets, dropout_mask=dropout_mask,
    )


def combined_loss(params: Params, config: ModelConfig, inp: dict) -> float:
    """Forward-only scalar loss touching all three heads."""
    dtype = params["cls.w"].dtype
    hidden, _ = encoder_forward(params, config, inp["ids"], inp["mask"])
    mlm_logits, _ = mlm_head_forward(params, hidden, inp["rows"], inp["cols"])
    l_mlm, _ = softmax_xent(mlm_logits, inp["mlm_targets"])
    disc_logits, _ = disc_head_forward(params, hidden)
    l_disc, _ = binary_xent(
        disc_logits, inp["disc_labels"].astype(dtype), inp["mask"].astype(dtype)
    )
    cls_logits, _ = cls_head_forward(
        params, hidden, None if inp["dropout_mask"] is None
        else inp["dropout_mask"].astype(dtype)
    )
    l_cls, _ = softmax_xent(cls_logits, inp["cls_targets"])
    return l_mlm + l_disc + l_cls


def combined_grads(params: Params, config: ModelConfig, inp: dict) -> Params:
    """Analytic gradients of combined_loss for every parameter tensor."""
    dtype = params["cls.w"].dtype
    hidden, cache = encoder_forward(params, config, inp["ids"], inp["mask"])
    grads = zero_grads(config, dtype=dtype)
    d_hidden = np.zeros_like(hidden)

    mlm_logits, mlm_cache = mlm_head_forward(params, hidden, inp["rows"], inp["cols"])
    _, dl = softmax_xent(mlm_logits, inp["mlm_targets"])
    mlm_head_backward(params, mlm_cache, dl, grads, d_hidden)

    disc_logits, disc_cache = disc_head_forward(params, hidden)
    _, dl = binary_xent(
        disc_logits, inp["disc_labels"].astype(dtype), inp["mask"].astype(dtype)
    )
    disc_head_backward(params, disc_cache, dl, grads, d_hidden)

    cls_logits, cls_cache = cls_head_forward(
        params, hidden, None if inp["dropout_mask"] is None
        else inp["dropout_mask"].astype(dtype)
    )
    _, dl = softmax_xent(cls_logits, inp["cls_targets"])
    cls_head_backward(params, cls_cache, dl, grads, d_hidden)

    encoder_backward(params, config, cache, d_hidden, grads)
    return grads


def relative_error(analytic: float, numeric: float, floor: float) -> float:
    scale = max(abs(analytic), abs(numeric))
    if scale < floor:
        return 0.0
    return abs(analytic - numeric) / scale


def central_diff(loss_fn, flat: np.ndarray, idx: int, eps: float) -> float:
    orig = flat[idx]
    flat[idx] = orig + eps
    lp = loss_fn()
    flat[idx] = orig - eps
    lm = loss_fn()
    flat[idx] = orig
    return (lp - lm) / (2.0 * eps)


def best_fd_error(loss_fn, flat, idx, analytic, eps_scale, floor,
                  multipliers=(0.1, 1.0, 10.0)) -> float:
    """Relative error against the best of several central-difference step
    sizes (small steps beat truncation on curved coordinates, large steps
    beat roundoff on tiny gradients); a systematically wrong analytic
    gradient fails at every step size."""
    base = eps_scale * max(1.0, abs(flat[idx]))
    errs = []
    for mult in multipliers:
        fd = central_diff(loss_fn, flat, idx, mult * base)
        errs.append(relative_error(analytic, fd, floor))
    return min(errs)


def check_model_gradients(config: ModelConfig, seed: int, dtype=np.float64,
                          entries_per_tensor: int | None = None,
                          eps_scale: float = 3e-5, floor: float = 1e-6,
                          multipliers=(0.1, 1.0, 10.0)):
    """FD-check ``entries_per_tensor`` random entries (None = all) of every
    parameter tensor; returns {tensor name: worst relative error}.

    The FD oracle always differentiates the float64 loss; ``dtype`` controls
    the precision of the analytic gradient under test.
    """
    ckpt = init_model(config, seed)
    inp = build_inputs(config, seed + 1)
    params = cast_params(ckpt.tensors, dtype)
    grads = combined_grads(params, config, inp)

    params64 = cast_params(params, np.float64)
    loss_fn = lambda: combined_loss(params64, config, inp)  # noqa: E731
    rng = np.random.default_rng(seed + 2)
    worst: dict[str, float] = {}
    for name, tensor in params64.items():
        flat = tensor.reshape(-1)
        if entries_per_tensor is None or flat.size <= entries_per_tensor:
            indices = np.arange(flat.size)
        else:
            indices = rng.choice(flat.size, size=entries_per_tensor, replace=False)
        worst_rel = 0.0
        gflat = grads[name].reshape(-1)
        for idx in indices:
            worst_rel = max(
                worst_rel,
                best_fd_error(loss_fn, flat, idx, float(gflat[idx]), eps_scale, floor),
            )
        worst[name] = worst_rel
    return worst
