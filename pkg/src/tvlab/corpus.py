"""Tweet corpus I/O, train/validation splitting, and pretraining pair assembly.

Corpus files are TSV: ``id<TAB>label<TAB>text``, one record per line, UTF-8,
LF line endings, no header. The label field is one of ``positive``,
``negative``, ``neutral``, or ``-`` for unlabeled records.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

from .errors import CorpusError

# Marker inserted between two tweets when they are joined into one
# pretraining example. Matches the separator token of the vocabulary so the
# joined text encodes with a real separator between the two tweets.
PAIR_SEPARATOR = "[SEP]"

UNLABELED_FIELD = "-"


class SentimentLabel(IntEnum):
    """Three-way tweet polarity with a stable integer encoding."""

    NEGATIVE = 0
    NEUTRAL = 1
    POSITIVE = 2

    @classmethod
    def parse(cls, value: str) -> "SentimentLabel":
        try:
            return _LABEL_FROM_STR[value]
        except KeyError:
            raise CorpusError(f"unknown label '{value}'") from None

    def __str__(self) -> str:
        return self.name.lower()


_LABEL_FROM_STR = {
    "negative": SentimentLabel.NEGATIVE,
    "neutral": SentimentLabel.NEUTRAL,
    "positive": SentimentLabel.POSITIVE,
}


@dataclass(frozen=True)
class TweetRecord:
    """One tweet: unique id, raw or preprocessed text, optional polarity."""

    id: str
    text: str
    label: SentimentLabel | None = None


@dataclass(frozen=True)
class CorpusSplit:
    train: list[TweetRecord]
    validation: list[TweetRecord]
    seed: int


def load_corpus(path: str | Path, labeled: bool = True) -> list[TweetRecord]:
    """Read a TSV corpus file; one TweetRecord per non-empty line.

    With ``labeled=False`` the label field is ignored entirely and every
    record comes back unlabeled.
    """
    raw = Path(path).read_text(encoding="utf-8")
    records: list[TweetRecord] = []
    seen_ids: set[str] = set()
    for lineno, line in enumerate(raw.split("\n"), start=1):
        if line == "":
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise CorpusError(
                f"expected 3 tab-separated fields, got {len(fields)} at line {lineno}"
            )
        rec_id, label_str, text = fields
        if rec_id == "":
            raise CorpusError(f"empty id at line {lineno}")
        if rec_id in seen_ids:
            raise CorpusError(f"duplicate id '{rec_id}' at line {lineno}")
        seen_ids.add(rec_id)
        label: SentimentLabel | None = None
        if labeled and label_str != UNLABELED_FIELD:
            try:
                label = SentimentLabel.parse(label_str)
            except CorpusError:
                raise CorpusError(
                    f"unknown label '{label_str}' at line {lineno}"
                ) from None
        records.append(TweetRecord(rec_id, text, label))
    return records


def save_corpus(records: list[TweetRecord], path: str | Path) -> None:
    """Write records as canonical TSV (round-trips with load_corpus).

    Tabs and newlines inside tweet text are replaced with single spaces so
    the TSV framing stays intact.
    """
    lines = []
    for rec in records:
        text = rec.text.replace("\t", " ").replace("\n", " ").replace("\r", " ")
        label = UNLABELED_FIELD if rec.label is None else str(rec.label)
        lines.append(f"{rec.id}\t{label}\t{text}")
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def split_validation(records: list[TweetRecord], n: int, seed: int) -> CorpusSplit:
    """Sample ``min(n, len(records))`` validation records uniformly without
    replacement; both halves keep the original corpus order."""
    if n < 0:
        raise CorpusError(f"validation size must be >= 0, got {n}")
    k = min(n, len(records))
    chosen = set(random.Random(seed).sample(range(len(records)), k))
    validation = [rec for i, rec in enumerate(records) if i in chosen]
    train = [rec for i, rec in enumerate(records) if i not in chosen]
    return CorpusSplit(train=train, validation=validation, seed=seed)


def build_electra_pairs(tweets: list[str]) -> list[str]:
    """Join consecutive tweets pairwise (stride 2) into pretraining examples.

    [t1, t2, t3, t4] -> [t1 SEP t2, t3 SEP t4]; an odd trailing tweet is
    emitted alone.
    """
    out = []
    for i in range(0, len(tweets) - 1, 2):
        out.append(f"{tweets[i]} {PAIR_SEPARATOR} {tweets[i + 1]}")
    if len(tweets) % 2 == 1:
        out.append(tweets[-1])
    return out
