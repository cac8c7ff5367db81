"""Logit providers: stand-ins for the re-ranking language model.

A provider either returns raw logits per continuation position
(``forward``) or, for remote services, per-token log-probabilities of the
echoed continuation (``token_logprobs``). Scoring code handles both.
"""

from __future__ import annotations

import json
import math
import os
import time
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence
from urllib.parse import urlparse

import numpy as np

from ..errors import ConfigError, ProviderError, UntokenizableError
from ..taxonomy import render_intent_path
from ..textproc import tokenize, whitespace_tokens
from .prompt import DEFAULT_TEMPLATE, PromptTemplate, parse_prompt

UNIGRAM = "<unigram>"


class MockTable:
    """Bigram table with unigram backoff.

    File format: JSON object mapping a context token to ``{next token:
    probability}``; the reserved key ``"<unigram>"`` holds the backoff row.
    Optionally wrapped as ``{"rows": {...}, "smoothing": float, "vocab": [...]}``.
    Tokens missing from a row get probability ``smoothing`` (0 means -inf logit).
    """

    def __init__(self, rows: Mapping[str, Mapping[str, float]], smoothing: float = 1e-9,
                 vocab: Iterable[str] = ()):
        if smoothing < 0:
            raise ConfigError("smoothing must be >= 0")
        self.raw = {ctx: dict(row) for ctx, row in rows.items()}
        self.smoothing = float(smoothing)
        words = set(vocab)
        for ctx, row in self.raw.items():
            if ctx != UNIGRAM:
                words.add(ctx)
            for tok, p in row.items():
                if p < 0:
                    raise ConfigError(f"negative probability for {ctx!r} -> {tok!r}")
                words.add(tok)
        self.vocab = sorted(words)
        self.token_id = {t: i for i, t in enumerate(self.vocab)}
        floor = math.log(smoothing) if smoothing > 0 else -math.inf
        ctxs = sorted(self.raw)
        self.row_id = {c: i for i, c in enumerate(ctxs)}
        mat = np.full((len(ctxs), len(self.vocab)), floor, dtype=np.float64)
        for c, i in self.row_id.items():
            for tok, p in self.raw[c].items():
                mat[i, self.token_id[tok]] = math.log(p) if p > 0 else -math.inf
        mat.flags.writeable = False
        self.logit_rows = mat

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def row_for(self, context_tokens: Sequence[str]) -> int:
        if context_tokens and context_tokens[-1] in self.row_id:
            return self.row_id[context_tokens[-1]]
        if UNIGRAM in self.row_id:
            return self.row_id[UNIGRAM]
        last = context_tokens[-1] if context_tokens else "<empty>"
        raise UntokenizableError(f"no table row for context {last!r} and no unigram backoff")

    def to_dict(self) -> dict:
        return {"rows": self.raw, "smoothing": self.smoothing}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True), encoding="utf-8")

    @classmethod
    def from_dict(cls, doc: dict) -> "MockTable":
        if "rows" in doc and isinstance(doc["rows"], dict):
            extra = set(doc) - {"rows", "smoothing", "vocab"}
            if extra:
                raise ConfigError(f"unknown mock table field(s) {sorted(extra)}")
            return cls(doc["rows"], doc.get("smoothing", 1e-9), doc.get("vocab", ()))
        return cls(doc)

    @classmethod
    def load(cls, path: str | Path) -> "MockTable":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def mock_logits(table: MockTable, context_tokens: Sequence[str]) -> np.ndarray:
    """Logits for the next token: the last context token's row, else the unigram row."""
    return table.logit_rows[table.row_for(context_tokens)]


def learn_mock_table(intent_texts: Iterable[str], start_token: str = "intent:",
                     smoothing: float = 1e-6) -> MockTable:
    """Estimate a bigram table over rendered intent strings.

    ``start_token`` is the last prompt token, so its row is the
    distribution of first intent tokens.
    """
    bigrams: dict[str, Counter] = defaultdict(Counter)
    unigrams: Counter = Counter()
    for text in intent_texts:
        toks = whitespace_tokens(text)
        prev = start_token
        for t in toks:
            bigrams[prev][t] += 1
            unigrams[t] += 1
            prev = t
    rows = {}
    for ctx, counts in bigrams.items():
        total = sum(counts.values())
        rows[ctx] = {t: c / total for t, c in counts.items()}
    total = sum(unigrams.values())
    rows[UNIGRAM] = {t: c / total for t, c in unigrams.items()}
    return MockTable(rows, smoothing)


def _char_trigrams(text: str) -> set[str]:
    out: set[str] = set()
    for tok in tokenize(text).tokens:
        padded = f"<{tok}>"
        out.update(padded[i : i + 3] for i in range(len(padded) - 2))
    return out


@dataclass
class ContinuationLogits:
    logits: np.ndarray  # (s_j, V)
    targets: np.ndarray  # (s_j,) vocabulary ids
    log_normalizer: np.ndarray | None = None  # (s_j,) row log-sum-exp, when the provider has it


class MockLogitProvider:
    """Deterministic mock of a fine-tuned model's forward pass.

    The next-token distribution mixes the bigram table with a copy
    distribution over the intents of the exemplars in the prompt::

        p = (1 - copy_weight) * softmax(bigram row) + copy_weight * p_copy

    ``p_copy`` spreads each exemplar's intent tokens with weight equal to
    the set cosine between the character trigrams of its query and those of
    the prompt query, raised to ``sharpness``. Words that occur
    in the prompt but not in the table extend the vocabulary with the
    smoothing floor, so intents added to the index after the table was
    built remain scorable. ``copy_weight=0`` gives the pure bigram model.
    """

    def __init__(self, table: MockTable, copy_weight: float = 0.0,
                 template: PromptTemplate = DEFAULT_TEMPLATE, sharpness: float = 1.0):
        if not 0.0 <= copy_weight < 1.0:
            raise ConfigError("copy_weight must be in [0, 1)")
        self.table = table
        self.copy_weight = float(copy_weight)
        self.template = template
        self.sharpness = float(sharpness)

    @property
    def vocab_size(self) -> int:
        return self.table.vocab_size

    def tokenize(self, text: str) -> list[str]:
        return whitespace_tokens(text)

    def _prompt_vocab(self, prompt_tokens: Sequence[str]) -> dict[str, int]:
        token_id = self.table.token_id
        extra = sorted({t for t in prompt_tokens if t not in token_id})
        if not extra:
            return token_id
        ids = dict(token_id)
        base = len(token_id)
        for i, t in enumerate(extra):
            ids[t] = base + i
        return ids

    def copy_distribution(self, prompt: str, token_id: Mapping[str, int]) -> np.ndarray | None:
        """Similarity-weighted token distribution over exemplar intents, or None."""
        parsed = parse_prompt(prompt, self.template)
        if parsed["query"] is None:
            return None
        q = _char_trigrams(parsed["query"])
        if not q:
            return None
        mass = np.zeros(len(token_id), dtype=np.float64)
        for ex_query, ex_intent in parsed["exemplars"]:
            e = _char_trigrams(ex_query)
            if not e:
                continue
            w = (len(q & e) / math.sqrt(len(q) * len(e))) ** self.sharpness
            if w == 0.0:
                continue
            for t in whitespace_tokens(ex_intent):
                mass[token_id[t]] += w
        total = mass.sum()
        return mass / total if total > 0 else None

    def forward(self, prompt: str, continuations: Sequence[str]) -> list[ContinuationLogits]:
        """Logits at each continuation position; prompt positions are masked out."""
        prompt_tokens = self.tokenize(prompt)
        token_id = self._prompt_vocab(prompt_tokens)
        n_extra = len(token_id) - self.table.vocab_size
        copy = self.copy_distribution(prompt, token_id) if self.copy_weight > 0 else None
        floor = math.log(self.table.smoothing) if self.table.smoothing > 0 else -math.inf
        per_cont = []
        for cont in continuations:
            toks = self.tokenize(cont)
            if not toks:
                raise UntokenizableError(f"continuation {cont!r} has no tokens")
            try:
                targets = np.fromiter((token_id[t] for t in toks), dtype=np.int64, count=len(toks))
            except KeyError as exc:
                raise UntokenizableError(f"token {exc.args[0]!r} is outside the mock vocabulary") from None
            rows = np.empty(len(toks), dtype=np.int64)
            context = list(prompt_tokens[-1:])
            for i, t in enumerate(toks):
                rows[i] = self.table.row_for(context)
                context = [t]
            per_cont.append((rows, targets))
        # Build each distinct context row once; positions then index into it.
        used = np.unique(np.concatenate([r for r, _ in per_cont])) if per_cont else np.zeros(0, np.int64)
        block = self.table.logit_rows[used]
        if n_extra:
            block = np.hstack([block, np.full((len(used), n_extra), floor)])
        if copy is not None:
            with np.errstate(divide="ignore"):
                block = np.log((1.0 - self.copy_weight) * softmax(block) + self.copy_weight * copy)
        lse = logsumexp_rows(block)[:, 0]
        where = {int(r): i for i, r in enumerate(used)}
        out = []
        for rows, targets in per_cont:
            pos = [where[int(r)] for r in rows]
            out.append(ContinuationLogits(block[pos], targets, lse[pos]))
        return out


def softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - np.max(logits, axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def logsumexp_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp, shape ``(rows, 1)``."""
    m = np.max(logits, axis=-1, keepdims=True)
    with np.errstate(divide="ignore"):
        return m + np.log(np.sum(np.exp(logits - m), axis=-1, keepdims=True))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax; rows may contain -inf but need one finite entry."""
    return logits - logsumexp_rows(logits)


class UniformLogitProvider:
    """All-zero logits over a fixed vocabulary."""

    def __init__(self, vocab: Iterable[str]):
        self.vocab = sorted(set(vocab))
        self.token_id = {t: i for i, t in enumerate(self.vocab)}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def tokenize(self, text: str) -> list[str]:
        return whitespace_tokens(text)

    def forward(self, prompt: str, continuations: Sequence[str]) -> list[ContinuationLogits]:
        out = []
        for cont in continuations:
            toks = self.tokenize(cont)
            if not toks:
                raise UntokenizableError(f"continuation {cont!r} has no tokens")
            try:
                targets = np.array([self.token_id[t] for t in toks], dtype=np.int64)
            except KeyError as exc:
                raise UntokenizableError(f"token {exc.args[0]!r} is outside the vocabulary") from None
            out.append(ContinuationLogits(np.zeros((len(toks), len(self.vocab))), targets))
        return out


class ConstantCostProvider:
    """Wraps a provider and sleeps a fixed time per continuation, sequentially."""

    def __init__(self, inner, seconds_per_candidate: float):
        self.inner = inner
        self.seconds_per_candidate = seconds_per_candidate

    def tokenize(self, text: str) -> list[str]:
        return self.inner.tokenize(text)

    def forward(self, prompt: str, continuations: Sequence[str]) -> list[ContinuationLogits]:
        out = []
        for cont in continuations:
            time.sleep(self.seconds_per_candidate)
            out.extend(self.inner.forward(prompt, [cont]))
        return out


class FailingProvider:
    """Always raises; exercises the pipeline fallback path."""

    def __init__(self, message: str = "provider unavailable"):
        self.message = message

    def tokenize(self, text: str) -> list[str]:
        return whitespace_tokens(text)

    def forward(self, prompt: str, continuations: Sequence[str]):
        raise ProviderError(self.message)


class RemoteLogitProvider:
    """Completions-style service returning log-probs of an echoed continuation.

    Request ``{"model", "prompt", "continuation"}``; response
    ``{"token_logprobs": [floats]}``.
    """

    def __init__(self, endpoint: str, model: str, timeout: float = 10.0, retries: int = 2,
                 max_in_flight: int = 4, api_key_env: str | None = None, client=None):
        import httpx

        url = urlparse(endpoint or "")
        if url.scheme not in ("http", "https") or not url.netloc:
            raise ConfigError(f"remote endpoint is not a valid URL: {endpoint!r}")
        self.endpoint = endpoint
        self.model = model
        self.retries = retries
        self.max_in_flight = max_in_flight
        headers = {}
        if api_key_env and os.environ.get(api_key_env):
            headers["Authorization"] = f"Bearer {os.environ[api_key_env]}"
        self._client = client or httpx.Client(timeout=timeout, headers=headers)

    def token_logprobs(self, prompt: str, continuation: str) -> list[float]:
        import httpx

        last: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = self._client.post(
                    self.endpoint, json={"model": self.model, "prompt": prompt, "continuation": continuation}
                )
            except (httpx.TimeoutException, httpx.TransportError) as exc:
                last = ProviderError(f"log-prob request failed: {exc}")
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last = ProviderError(f"log-prob service returned {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise ProviderError(f"log-prob service returned {resp.status_code}", retryable=False)
            try:
                lps = [float(x) for x in resp.json()["token_logprobs"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise ProviderError(f"malformed log-prob response: {exc}", retryable=False) from exc
            if not lps:
                raise UntokenizableError(f"service returned no tokens for {continuation!r}")
            if any(x > 0 or math.isnan(x) for x in lps):
                raise ProviderError("log-probabilities must be <= 0", retryable=False)
            return lps
        assert last is not None
        raise last

    def batch_token_logprobs(self, prompt: str, continuations: Sequence[str]) -> list[list[float]]:
        if len(continuations) <= 1 or self.max_in_flight == 1:
            return [self.token_logprobs(prompt, c) for c in continuations]
        with ThreadPoolExecutor(max_workers=min(self.max_in_flight, len(continuations))) as pool:
            return list(pool.map(lambda c: self.token_logprobs(prompt, c), continuations))


@dataclass(frozen=True)
class LogitProviderSpec:
    kind: str = "mock"
    table: str | None = None  # path to a mock table file
    copy_weight: float = 0.9
    sharpness: float = 4.0
    endpoint: str | None = None
    model: str | None = None
    timeout: float = 10.0
    retries: int = 2
    max_in_flight: int = 4
    api_key_env: str | None = None

    def __post_init__(self):
        if self.kind not in ("mock", "remote", "uniform"):
            raise ConfigError(f"unknown logit provider kind {self.kind!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LogitProviderSpec":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown logit provider field(s) {sorted(extra)}")
        return cls(**d)


def make_logit_provider(spec: LogitProviderSpec, default_table: MockTable | None = None,
                        template: PromptTemplate = DEFAULT_TEMPLATE):
    if spec.kind == "remote":
        if not spec.model:
            raise ConfigError("remote logit provider needs a model name")
        return RemoteLogitProvider(spec.endpoint, spec.model, spec.timeout, spec.retries,
                                   spec.max_in_flight, spec.api_key_env)
    table = MockTable.load(spec.table) if spec.table else default_table
    if table is None:
        raise ConfigError("mock logit provider needs a table file")
    if spec.kind == "uniform":
        return UniformLogitProvider(table.vocab)
    return MockLogitProvider(table, spec.copy_weight, template, spec.sharpness)


def intent_table_for(pairs) -> MockTable:
    """Mock table learned from the intents of indexed exemplars."""
    return learn_mock_table(render_intent_path(p.intent) for p in pairs)
