"""Checkpoint container, binary serialization, and embedding extension.

File layout: magic ``TVLM``, format version (u32 LE), header length (u32
LE), a UTF-8 JSON header (config, vocab fingerprint, and one name/dtype/
shape entry per tensor in manifest order), then the raw little-endian
float32 tensor payloads in the same order.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from .config import ModelConfig, manifest
from .net import INIT_STD, Params, init_params, truncated_normal

MAGIC = b"TVLM"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """Model config plus named parameter tensors and the vocab fingerprint
    of the vocabulary the model was trained against (0 = not set)."""

    config: ModelConfig
    tensors: Params
    vocab_fingerprint: int = 0

    def copy(self) -> "Checkpoint":
        return Checkpoint(
            config=self.config,
            tensors={k: v.copy() for k, v in self.tensors.items()},
            vocab_fingerprint=self.vocab_fingerprint,
        )


def init_model(config: ModelConfig, seed: int, vocab_fingerprint: int = 0) -> Checkpoint:
    """Fresh checkpoint: truncated-normal weights, unit layer-norm gains."""
    return Checkpoint(config, init_params(config, seed), vocab_fingerprint)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    names = [name for name, _ in manifest(ckpt.config)]
    header = {
        "config": ckpt.config.to_dict(),
        "vocab_fingerprint": ckpt.vocab_fingerprint,
        "tensors": [
            {"name": name, "dtype": "f32", "shape": list(ckpt.tensors[name].shape)}
            for name in names
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.uint32(FORMAT_VERSION).tobytes())
        f.write(np.uint32(len(blob)).tobytes())
        f.write(blob)
        for name in names:
            f.write(np.ascontiguousarray(ckpt.tensors[name], dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a TVLM checkpoint (bad magic)")
    version = int(np.frombuffer(data, "<u4", count=1, offset=4)[0])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    header_len = int(np.frombuffer(data, "<u4", count=1, offset=8)[0])
    if len(data) < 12 + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[12 : 12 + header_len].decode("utf-8"))
        config = ModelConfig.from_dict(header["config"])
        fingerprint = int(header["vocab_fingerprint"])
        listed = [(t["name"], tuple(t["shape"]), t["dtype"]) for t in header["tensors"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: malformed header ({exc})") from exc
    expected = manifest(config)
    if [(n, s) for n, s, _ in listed] != expected:
        raise CheckpointError(f"{path}: tensor manifest does not match config")
    if any(d != "f32" for _, _, d in listed):
        raise CheckpointError(f"{path}: unsupported tensor dtype")

    tensors: Params = {}
    offset = 12 + header_len
    for name, shape, _ in listed:
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 4 * count
        if end > len(data):
            raise CheckpointError(f"{path}: truncated tensor payload at '{name}'")
        tensors[name] = (
            np.frombuffer(data, "<f4", count=count, offset=offset)
            .reshape(shape)
            .astype(np.float32)
        )
        offset = end
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")
    return Checkpoint(config, tensors, fingerprint)


def extend_embeddings(ckpt: Checkpoint, new_vocab_size: int, seed: int,
                      vocab_fingerprint: int | None = None) -> Checkpoint:
    """Grow the (tied) embedding table; existing rows are preserved bitwise.

    New rows start at the mean of the old rows plus truncated-normal noise,
    so they begin in-distribution.
    """
    old_size = ckpt.config.vocab_size
    if new_vocab_size < old_size:
        raise CheckpointError(
            f"cannot shrink vocabulary: {old_size} -> {new_vocab_size}"
        )
    out = ckpt.copy()
    if vocab_fingerprint is not None:
        out.vocab_fingerprint = vocab_fingerprint
    if new_vocab_size == old_size:
        return out

    extra = new_vocab_size - old_size
    rng = np.random.default_rng(seed)
    emb = out.tensors["embeddings.token"]
    dtype = emb.dtype
    mean_row = emb.mean(axis=0)
    new_rows = mean_row + truncated_normal(rng, (extra, emb.shape[1]), INIT_STD)
    out.tensors["embeddings.token"] = np.vstack([emb, new_rows.astype(dtype)])
    bias = out.tensors["mlm.output_bias"]
    new_bias = bias.mean() + truncated_normal(rng, (extra,), INIT_STD)
    out.tensors["mlm.output_bias"] = np.concatenate([bias, new_bias.astype(dtype)])
    out.config = dataclasses.replace(ckpt.config, vocab_size=new_vocab_size)
    return out
