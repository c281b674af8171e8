"""Subword vocabulary: WordPiece-style encoding, unknown-token auditing, and
append-only emoticon augmentation.

A vocabulary file is UTF-8, one token per line (line index = id), LF
endings. Ids 0..4 are pinned to the special tokens. Augmentation only ever
appends, so existing token ids (and therefore trained embedding rows) stay
valid.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, VocabError

PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = 0, 1, 2, 3, 4
PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN, MASK_TOKEN = (
    "[PAD]",
    "[UNK]",
    "[CLS]",
    "[SEP]",
    "[MASK]",
)
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN, MASK_TOKEN)
NUM_SPECIALS = len(SPECIAL_TOKENS)
CONTINUATION_PREFIX = "##"

# Longer words are mapped straight to [UNK] (reference WordPiece behavior).
MAX_WORD_CHARS = 100

# Unicode blocks counted as emoticons: Emoticons, Supplemental Symbols and
# Pictographs, Miscellaneous Symbols and Pictographs, Dingbats.
EMOTICON_RANGES = (
    (0x1F600, 0x1F64F),
    (0x1F900, 0x1F9FF),
    (0x1F300, 0x1F5FF),
    (0x2700, 0x27BF),
)


def is_emoticon(text: str) -> bool:
    """True when every code point of a non-empty string is in an emoticon block."""
    if not text:
        return False
    return all(
        any(lo <= ord(ch) <= hi for lo, hi in EMOTICON_RANGES) for ch in text
    )


class Vocab:
    """Immutable ordered subword vocabulary with pinned special ids."""

    def __init__(self, tokens: Sequence[str]):
        tokens = tuple(tokens)
        if len(tokens) < NUM_SPECIALS or tokens[:NUM_SPECIALS] != SPECIAL_TOKENS:
            raise VocabError(
                "vocabulary must start with the special tokens "
                + ", ".join(SPECIAL_TOKENS)
            )
        index: dict[str, int] = {}
        for i, token in enumerate(tokens):
            if token == "":
                raise VocabError(f"empty token at line {i}")
            if token in index:
                raise VocabError(
                    f"duplicate token '{token}' at lines {index[token]} and {i}"
                )
            index[token] = i
        self._tokens = tokens
        self._index = index

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self._tokens == other._tokens

    @property
    def tokens(self) -> tuple[str, ...]:
        return self._tokens

    def id_of(self, token: str) -> int | None:
        return self._index.get(token)

    def token_of(self, token_id: int) -> str:
        if not 0 <= token_id < len(self._tokens):
            raise VocabError(
                f"token id {token_id} out of range for vocabulary of size {len(self)}"
            )
        return self._tokens[token_id]

    def to_bytes(self) -> bytes:
        """Canonical file serialization (used for fingerprinting)."""
        return "".join(t + "\n" for t in self._tokens).encode("utf-8")


def load_vocab(path: str | Path) -> Vocab:
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return Vocab(lines)


def save_vocab(vocab: Vocab, path: str | Path) -> None:
    Path(path).write_bytes(vocab.to_bytes())


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def vocab_fingerprint(vocab: Vocab) -> int:
    return fnv1a64(vocab.to_bytes())


def split_word(word: str, vocab: Vocab) -> list[str] | None:
    """Greedy longest-match-first subword split; None when no decomposition."""
    if len(word) > MAX_WORD_CHARS:
        return None
    pieces: list[str] = []
    start = 0
    while start < len(word):
        end = len(word)
        match = None
        while start < end:
            piece = word[start:end]
            if start > 0:
                piece = CONTINUATION_PREFIX + piece
            if piece in vocab:
                match = piece
                break
            end -= 1
        if match is None:
            return None
        pieces.append(match)
        start = end
    return pieces


def encode(text: str, vocab: Vocab, max_len: int) -> tuple[list[int], list[int]]:
    """Encode normalized text to ([CLS] ids [SEP] pad...) of exactly max_len.

    Returns (ids, attention mask); subwords are truncated so [CLS] and [SEP]
    always fit. Any word with no decomposition contributes a single [UNK].
    """
    if max_len < 2:
        raise ConfigError(f"max_len must be >= 2, got {max_len}")
    ids: list[int] = []
    for word in text.split():
        pieces = split_word(word, vocab)
        if pieces is None:
            ids.append(UNK_ID)
        else:
            ids.extend(vocab.id_of(p) for p in pieces)  # type: ignore[misc]
    ids = [CLS_ID] + ids[: max_len - 2] + [SEP_ID]
    mask = [1] * len(ids)
    ids += [PAD_ID] * (max_len - len(ids))
    mask += [0] * (max_len - len(mask))
    return ids, mask


_DROPPED_ON_DECODE = {PAD_ID, CLS_ID, SEP_ID, MASK_ID}


def decode(ids: Iterable[int], vocab: Vocab) -> str:
    """Inverse of encode up to [UNK]: drops structural specials, merges ##."""
    words: list[str] = []
    for token_id in ids:
        token = vocab.token_of(token_id)
        if token_id in _DROPPED_ON_DECODE:
            continue
        if token.startswith(CONTINUATION_PREFIX) and words:
            words[-1] += token[len(CONTINUATION_PREFIX):]
        else:
            words.append(token.removeprefix(CONTINUATION_PREFIX))
    return " ".join(words)


@dataclass(frozen=True)
class UnknownAudit:
    """Tally of whitespace words that encode to [UNK], plus the emoticon subset."""

    frequencies: dict[str, int] = field(default_factory=dict)
    emoticons: dict[str, int] = field(default_factory=dict)

    @property
    def unique_count(self) -> int:
        return len(self.frequencies)


def audit_unknowns(corpus: Iterable[str], vocab: Vocab) -> UnknownAudit:
    """Count unknown surface forms over a corpus of preprocessed texts."""
    freq: Counter[str] = Counter()
    for text in corpus:
        for word in text.split():
            if split_word(word, vocab) is None:
                freq[word] += 1
    frequencies = dict(freq)
    emoticons = {w: c for w, c in frequencies.items() if is_emoticon(w)}
    return UnknownAudit(frequencies=frequencies, emoticons=emoticons)


def write_audit(audit: UnknownAudit, path: str | Path) -> None:
    rows = sorted(audit.frequencies.items(), key=lambda kv: (-kv[1], kv[0]))
    with open(path, "w", encoding="utf-8") as f:
        for form, count in rows:
            f.write(f"{form}\t{count}\t{int(form in audit.emoticons)}\n")


def read_audit(path: str | Path) -> UnknownAudit:
    frequencies: dict[str, int] = {}
    emoticons: dict[str, int] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        fields = line.split("\t")
        if len(fields) != 3:
            raise VocabError(f"malformed audit row at line {lineno}")
        form, count_str, emo_str = fields
        frequencies[form] = int(count_str)
        if emo_str == "1":
            emoticons[form] = int(count_str)
    return UnknownAudit(frequencies=frequencies, emoticons=emoticons)


def augment_vocab(vocab: Vocab, audit: UnknownAudit, k: int) -> Vocab:
    """Append the top-k emoticons by frequency (ties broken by code point)."""
    if k < 0:
        raise ConfigError(f"k must be >= 0, got {k}")
    ranked = sorted(audit.emoticons.items(), key=lambda kv: (-kv[1], kv[0]))
    new_tokens = [form for form, _ in ranked if form not in vocab][:k]
    return Vocab(vocab.tokens + tuple(new_tokens))
