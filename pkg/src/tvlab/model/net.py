"""Forward and analytic backward passes for the encoder and its three heads.

Everything is plain numpy on batch-first arrays: ids (B, T) int64, attention
mask (B, T) in {0, 1}. Computation runs in the dtype of the parameter dict,
float32 by default; gradient-check builds cast parameters to float64.

Blocks are pre-norm: x + Attn(LN(x)) followed by x + FF(LN(x)), with a final
layer norm after the stack. The MLM output projection is tied to the token
embedding table.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from ..errors import CheckpointError
from .config import ModelConfig, layer_prefixes, manifest

Params = dict[str, np.ndarray]

LN_EPS = 1e-12
INIT_STD = 0.02
_MASK_NEG = 1e9


# --- primitives -------------------------------------------------------------

def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return cdf + x * pdf


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return gain * xhat + bias, (xhat, inv)


def layer_norm_backward(dy: np.ndarray, cache, gain: np.ndarray):
    xhat, inv = cache
    lead = tuple(range(dy.ndim - 1))
    dgain = (dy * xhat).sum(axis=lead)
    dbias = dy.sum(axis=lead)
    dxhat = dy * gain
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dgain, dbias


def truncated_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    """Normal(0, std) with redraws outside +-2 std."""
    x = rng.standard_normal(shape) * std
    bad = np.abs(x) > 2.0 * std
    while bad.any():
        x[bad] = rng.standard_normal(int(bad.sum())) * std
        bad = np.abs(x) > 2.0 * std
    return x


# --- parameters -------------------------------------------------------------

def init_params(config: ModelConfig, seed: int, dtype=np.float32) -> Params:
    """Deterministic init: truncated normal sigma=0.02 everywhere except
    layer-norm gain=1 / bias=0."""
    rng = np.random.default_rng(seed)
    params: Params = {}
    for name, shape in manifest(config):
        if name.endswith("norm.gain"):
            tensor = np.ones(shape)
        elif name.endswith("norm.bias"):
            tensor = np.zeros(shape)
        else:
            tensor = truncated_normal(rng, shape, INIT_STD)
        params[name] = tensor.astype(dtype)
    return params


def zero_grads(config: ModelConfig, dtype=np.float32) -> Params:
    return {name: np.zeros(shape, dtype=dtype) for name, shape in manifest(config)}


def cast_params(params: Params, dtype) -> Params:
    return {name: tensor.astype(dtype) for name, tensor in params.items()}


def _linear_backward(x, w, dy, grads, wname, bname, d_x=None):
    """y = x @ w + b with arbitrary leading axes on x/dy."""
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    grads[wname] += x2.T @ dy2
    grads[bname] += dy2.sum(axis=0)
    dx = (dy2 @ w.T).reshape(x.shape)
    return dx if d_x is None else d_x + dx


# --- encoder ----------------------------------------------------------------

def encoder_forward(params: Params, config: ModelConfig, ids: np.ndarray,
                    mask: np.ndarray):
    """Returns final hidden states (B, T, H) and a cache for the backward pass."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.max(initial=0) >= config.vocab_size or ids.min(initial=0) < 0:
        raise CheckpointError(
            f"token id out of range for vocab_size={config.vocab_size}"
        )
    B, T = ids.shape
    if T > config.max_len:
        raise CheckpointError(f"sequence length {T} exceeds max_len={config.max_len}")
    dtype = params["embeddings.token"].dtype
    mask = np.asarray(mask, dtype=dtype)

    emb = params["embeddings.token"][ids] + params["embeddings.position"][:T]
    if "embeddings.projection" in params:
        x = emb @ params["embeddings.projection"]
    else:
        x = emb

    H, N = config.hidden_size, config.num_heads
    dh = H // N
    scale = 1.0 / math.sqrt(dh)
    # additive mask: 0 for real keys, -1e9 for padding keys
    add_mask = (mask[:, None, None, :] - 1.0) * _MASK_NEG

    layers = []
    for prefix in layer_prefixes(config):
        a, ln1 = layer_norm(
            x, params[f"{prefix}.attn.norm.gain"], params[f"{prefix}.attn.norm.bias"]
        )
        q = a @ params[f"{prefix}.attn.wq"] + params[f"{prefix}.attn.bq"]
        k = a @ params[f"{prefix}.attn.wk"] + params[f"{prefix}.attn.bk"]
        v = a @ params[f"{prefix}.attn.wv"] + params[f"{prefix}.attn.bv"]
        qh = q.reshape(B, T, N, dh).transpose(0, 2, 1, 3)
        kh = k.reshape(B, T, N, dh).transpose(0, 2, 1, 3)
        vh = v.reshape(B, T, N, dh).transpose(0, 2, 1, 3)
        scores = qh @ kh.transpose(0, 1, 3, 2) * scale + add_mask
        probs = softmax(scores)
        ctx = (probs @ vh).transpose(0, 2, 1, 3).reshape(B, T, H)
        attn_out = ctx @ params[f"{prefix}.attn.wo"] + params[f"{prefix}.attn.bo"]
        x1 = x + attn_out

        f, ln2 = layer_norm(
            x1, params[f"{prefix}.ff.norm.gain"], params[f"{prefix}.ff.norm.bias"]
        )
        pre = f @ params[f"{prefix}.ff.w1"] + params[f"{prefix}.ff.b1"]
        act = gelu(pre)
        ff_out = act @ params[f"{prefix}.ff.w2"] + params[f"{prefix}.ff.b2"]
        x2 = x1 + ff_out

        layers.append(
            dict(prefix=prefix, x=x, ln1=ln1, a=a, qh=qh, kh=kh, vh=vh,
                 probs=probs, ctx=ctx, x1=x1, ln2=ln2, f=f, pre=pre, act=act)
        )
        x = x2

    hidden, ln_f = layer_norm(
        x, params["encoder.final_norm.gain"], params["encoder.final_norm.bias"]
    )
    cache = dict(ids=ids, emb=emb, layers=layers, ln_f=ln_f, scale=scale, shape=(B, T))
    return hidden, cache


def encoder_backward(params: Params, config: ModelConfig, cache, d_hidden,
                     grads: Params) -> None:
    """Accumulate parameter gradients for d(loss)/d(hidden) into ``grads``."""
    B, T = cache["shape"]
    H, N = config.hidden_size, config.num_heads
    dh = H // N
    scale = cache["scale"]

    dx, dg, db = layer_norm_backward(d_hidden, cache["ln_f"], params["encoder.final_norm.gain"])
    grads["encoder.final_norm.gain"] += dg
    grads["encoder.final_norm.bias"] += db

    for layer in reversed(cache["layers"]):
        prefix = layer["prefix"]
        # x2 = x1 + ff(ln2(x1))
        dff_out = dx
        dact = _linear_backward(
            layer["act"], params[f"{prefix}.ff.w2"], dff_out, grads,
            f"{prefix}.ff.w2", f"{prefix}.ff.b2",
        )
        dpre = dact * gelu_grad(layer["pre"])
        df = _linear_backward(
            layer["f"], params[f"{prefix}.ff.w1"], dpre, grads,
            f"{prefix}.ff.w1", f"{prefix}.ff.b1",
        )
        dx1_ln, dg, db = layer_norm_backward(df, layer["ln2"], params[f"{prefix}.ff.norm.gain"])
        grads[f"{prefix}.ff.norm.gain"] += dg
        grads[f"{prefix}.ff.norm.bias"] += db
        dx1 = dx + dx1_ln

        # x1 = x + attn(ln1(x))
        dattn_out = dx1
        dctx = _linear_backward(
            layer["ctx"], params[f"{prefix}.attn.wo"], dattn_out, grads,
            f"{prefix}.attn.wo", f"{prefix}.attn.bo",
        )
        dctx_h = dctx.reshape(B, T, N, dh).transpose(0, 2, 1, 3)
        probs, vh = layer["probs"], layer["vh"]
        dprobs = dctx_h @ vh.transpose(0, 1, 3, 2)
        dvh = probs.transpose(0, 1, 3, 2) @ dctx_h
        dscores = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
        dqh = dscores @ layer["kh"] * scale
        dkh = dscores.transpose(0, 1, 3, 2) @ layer["qh"] * scale
        dq = dqh.transpose(0, 2, 1, 3).reshape(B, T, H)
        dk = dkh.transpose(0, 2, 1, 3).reshape(B, T, H)
        dv = dvh.transpose(0, 2, 1, 3).reshape(B, T, H)
        a = layer["a"]
        da = _linear_backward(a, params[f"{prefix}.attn.wq"], dq, grads,
                              f"{prefix}.attn.wq", f"{prefix}.attn.bq")
        da = _linear_backward(a, params[f"{prefix}.attn.wk"], dk, grads,
                              f"{prefix}.attn.wk", f"{prefix}.attn.bk", da)
        da = _linear_backward(a, params[f"{prefix}.attn.wv"], dv, grads,
                              f"{prefix}.attn.wv", f"{prefix}.attn.bv", da)
        dx_ln, dg, db = layer_norm_backward(da, layer["ln1"], params[f"{prefix}.attn.norm.gain"])
        grads[f"{prefix}.attn.norm.gain"] += dg
        grads[f"{prefix}.attn.norm.bias"] += db
        dx = dx1 + dx_ln

    if "embeddings.projection" in params:
        emb = cache["emb"]
        demb = _linear_grad_no_bias(emb, params["embeddings.projection"], dx, grads,
                                    "embeddings.projection")
    else:
        demb = dx
    np.add.at(grads["embeddings.token"], cache["ids"], demb)
    grads["embeddings.position"][:T] += demb.sum(axis=0)


def _linear_grad_no_bias(x, w, dy, grads, wname):
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    grads[wname] += x2.T @ dy2
    return (dy2 @ w.T).reshape(x.shape)


# --- heads ------------------------------------------------------------------

def mlm_head_forward(params: Params, hidden: np.ndarray, rows: np.ndarray,
                     cols: np.ndarray):
    """Vocabulary logits at the given (row, col) positions of hidden (B,T,H)."""
    x = hidden[rows, cols]
    t = x @ params["mlm.transform.w"] + params["mlm.transform.b"]
    g = gelu(t)
    n, ln = layer_norm(g, params["mlm.norm.gain"], params["mlm.norm.bias"])
    logits = n @ params["embeddings.token"].T + params["mlm.output_bias"]
    cache = dict(rows=rows, cols=cols, x=x, t=t, n=n, ln=ln)
    return logits, cache


def mlm_head_backward(params: Params, cache, dlogits, grads: Params, d_hidden):
    n = cache["n"]
    grads["embeddings.token"] += dlogits.T @ n
    grads["mlm.output_bias"] += dlogits.sum(axis=0)
    dn = dlogits @ params["embeddings.token"]
    dg, dgain, dbias = layer_norm_backward(dn, cache["ln"], params["mlm.norm.gain"])
    grads["mlm.norm.gain"] += dgain
    grads["mlm.norm.bias"] += dbias
    dt = dg * gelu_grad(cache["t"])
    dx = _linear_backward(cache["x"], params["mlm.transform.w"], dt, grads,
                          "mlm.transform.w", "mlm.transform.b")
    np.add.at(d_hidden, (cache["rows"], cache["cols"]), dx)


def disc_head_forward(params: Params, hidden: np.ndarray):
    """One replaced-vs-original logit per position, shape (B, T)."""
    t = hidden @ params["disc.transform.w"] + params["disc.transform.b"]
    g = gelu(t)
    logits = g @ params["disc.output.w"] + params["disc.output.b"][0]
    return logits, dict(hidden=hidden, t=t, g=g)


def disc_head_backward(params: Params, cache, dlogits, grads: Params, d_hidden):
    g, t = cache["g"], cache["t"]
    grads["disc.output.w"] += np.einsum("bth,bt->h", g, dlogits)
    grads["disc.output.b"] += dlogits.sum()
    dg = dlogits[..., None] * params["disc.output.w"]
    dt = dg * gelu_grad(t)
    d_hidden += _linear_backward(
        cache["hidden"], params["disc.transform.w"], dt, grads,
        "disc.transform.w", "disc.transform.b",
    )


def cls_head_forward(params: Params, hidden: np.ndarray,
                     dropout_mask: np.ndarray | None):
    """Class logits from the [CLS] vector (position 0), shape (B, C)."""
    c = hidden[:, 0, :]
    if dropout_mask is not None:
        c = c * dropout_mask
    logits = c @ params["cls.w"] + params["cls.b"]
    return logits, dict(c=c, dropout_mask=dropout_mask)


def cls_head_backward(params: Params, cache, dlogits, grads: Params, d_hidden):
    dc = _linear_backward(cache["c"], params["cls.w"], dlogits, grads, "cls.w", "cls.b")
    if cache["dropout_mask"] is not None:
        dc = dc * cache["dropout_mask"]
    d_hidden[:, 0, :] += dc


def make_dropout_mask(rng: np.random.Generator, shape, rate: float, dtype):
    """Inverted dropout mask: keep with probability 1-rate, scale by 1/(1-rate)."""
    if rate <= 0.0:
        return None
    keep = (rng.random(shape) >= rate).astype(dtype)
    return keep / (1.0 - rate)


# --- losses -----------------------------------------------------------------

def softmax_xent(logits: np.ndarray, targets: np.ndarray):
    """Mean cross-entropy over rows; returns (loss, dlogits)."""
    m = logits.shape[0]
    logp = log_softmax(logits)
    loss = -logp[np.arange(m), targets].mean()
    dlogits = softmax(logits)
    dlogits[np.arange(m), targets] -= 1.0
    return float(loss), dlogits / m


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def binary_xent(logits: np.ndarray, labels: np.ndarray, weights: np.ndarray):
    """Weighted mean binary cross-entropy with logits; returns (loss, dlogits)."""
    total = weights.sum()
    per = np.maximum(logits, 0.0) - logits * labels + np.log1p(np.exp(-np.abs(logits)))
    loss = float((per * weights).sum() / total)
    dlogits = weights * (sigmoid(logits) - labels) / total
    return loss, dlogits
