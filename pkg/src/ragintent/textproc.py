"""Deterministic text normalization and tokenization.

Everything here is locale independent: case folding uses ``str.lower`` on
NFC-normalized text and token boundaries come from ``str.isalnum``.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass

_WS = re.compile(r"\s+")
# Alphanumeric runs. Underscore is excluded because \w includes it.
_TOKEN = re.compile(r"[^\W_]+")

# Small English stopword list, only used when explicitly enabled.
STOPWORDS = frozenset(
    "a an and are as at be by for from has have i in is it its me my of on or "
    "our that the their this to was we were what when where which who why will "
    "with you your".split()
)

_SUFFIXES = ("ing", "edly", "ed", "ies", "es", "s", "ly")


def normalize(text: str) -> str:
    """NFC, lowercase, collapse whitespace runs to one space, strip."""
    text = unicodedata.normalize("NFC", text).lower()
    # lower() can produce decomposed sequences for a few code points.
    text = unicodedata.normalize("NFC", text)
    return _WS.sub(" ", text).strip()


def light_stem(token: str) -> str:
    """Strip one common English suffix, keeping at least three characters."""
    for suf in _SUFFIXES:
        if token.endswith(suf) and len(token) - len(suf) >= 3:
            return token[: -len(suf)]
    return token


@dataclass(frozen=True)
class TokenStream:
    tokens: tuple[str, ...]
    source_len: int

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


@dataclass(frozen=True)
class TokenizerConfig:
    """Opt-in extras on top of plain alphanumeric splitting."""

    stem: bool = False
    drop_stopwords: bool = False

    def as_dict(self) -> dict:
        return {"stem": self.stem, "drop_stopwords": self.drop_stopwords}


DEFAULT_TOKENIZER = TokenizerConfig()


def tokenize(text: str, config: TokenizerConfig = DEFAULT_TOKENIZER) -> TokenStream:
    """Split normalized text on non-alphanumeric boundaries.

    >>> tokenize("where's my order #123?").tokens
    ('where', 's', 'my', 'order', '123')
    """
    norm = normalize(text)
    tokens = _TOKEN.findall(norm)
    if config.drop_stopwords:
        tokens = [t for t in tokens if t not in STOPWORDS]
    if config.stem:
        tokens = [light_stem(t) for t in tokens]
    return TokenStream(tuple(tokens), len(text))


def whitespace_tokens(text: str) -> list[str]:
    """Whitespace-word tokens of normalized text (used by the mock language model)."""
    norm = normalize(text)
    return norm.split(" ") if norm else []
