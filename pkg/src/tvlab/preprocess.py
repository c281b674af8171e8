"""Five-step tweet normalization.

The steps run in a fixed order: basic tokenization, URL removal, collapsing
of consecutive mention runs, mention-to-placeholder replacement with a
1-based ordinal, and lowercasing. The result is the token stream joined by
single spaces, so normalization is idempotent under the default rules.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass

from .errors import ConfigError

_URL_PREFIXES = ("http://", "https://", "www.")


def _is_word_char(ch: str) -> bool:
    # alphanumerics, underscore, and combining marks (so that lowercasing,
    # which may decompose characters, never splits a word on a second pass)
    return ch == "_" or ch.isalnum() or unicodedata.category(ch).startswith("M")


@dataclass(frozen=True)
class PreprocessRules:
    """Normalization knobs; the step order itself is fixed.

    ``mention_placeholder`` must contain exactly one ``{i}`` slot and should
    stay lowercase word characters, otherwise idempotence is not guaranteed.
    """

    mention_placeholder: str = "mention_{i}"
    remove_urls: bool = True
    lowercase: bool = True

    def __post_init__(self) -> None:
        if self.mention_placeholder.count("{i}") != 1:
            raise ConfigError(
                "mention placeholder must contain exactly one '{i}' slot, "
                f"got '{self.mention_placeholder}'"
            )


DEFAULT_RULES = PreprocessRules()


def is_url(token: str) -> bool:
    """Prefix test for URL tokens; scheme/host prefixes are case-insensitive."""
    return token.lower().startswith(_URL_PREFIXES)


def basic_tokenize(text: str) -> list[str]:
    """Whitespace split with punctuation detachment.

    URL chunks and @-mentions stay atomic; runs of word characters form one
    token; every other character becomes its own token.
    """
    tokens: list[str] = []
    for chunk in text.split():
        if is_url(chunk):
            tokens.append(chunk)
            continue
        pos = 0
        while pos < len(chunk):
            start = pos
            if chunk[pos] == "@" and pos + 1 < len(chunk) and _is_word_char(chunk[pos + 1]):
                pos += 1  # mention: '@' plus the following word run
            if _is_word_char(chunk[pos]):
                while pos < len(chunk) and _is_word_char(chunk[pos]):
                    pos += 1
            else:
                pos += 1  # any other character stands alone
            tokens.append(chunk[start:pos])
    return tokens


def _is_mention(token: str) -> bool:
    return token.startswith("@")


def normalize_tweet(raw: str, rules: PreprocessRules = DEFAULT_RULES) -> str:
    """Apply the five normalization steps in order; total on any Unicode input."""
    tokens = basic_tokenize(raw)
    if rules.remove_urls:
        tokens = [t for t in tokens if not is_url(t)]
    # Collapse runs of adjacent mentions down to their first member.
    collapsed: list[str] = []
    for token in tokens:
        if _is_mention(token) and collapsed and _is_mention(collapsed[-1]):
            continue
        collapsed.append(token)
    # Replace each surviving mention with its 1-based ordinal placeholder.
    out: list[str] = []
    ordinal = 0
    for token in collapsed:
        if _is_mention(token):
            ordinal += 1
            out.append(rules.mention_placeholder.format(i=ordinal))
        else:
            out.append(token)
    result = " ".join(out)
    if rules.lowercase:
        result = result.lower()
    return result
