"""Dense query encoders and the vector math used for retrieval.

Two provider kinds exist. ``hash`` is a deterministic feature-hashing
bag-of-words encoder that runs offline; ``remote`` calls an embedding
service over JSON/HTTP (request ``{"model", "input": [texts]}``, response
``{"embeddings": [[floats]]}``).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Protocol, Sequence
from urllib.parse import urlparse

import numpy as np

from .errors import ConfigError, ProviderError
from .textproc import DEFAULT_TOKENIZER, TokenizerConfig, TokenStream, tokenize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmbeddingProviderSpec:
    kind: str = "hash"
    dim: int = 2048
    seed: int = 0
    # Character n-gram range (inclusive) added to each word feature; None disables.
    subword: tuple[int, int] | None = None
    endpoint: str | None = None
    model: str | None = None
    timeout: float = 10.0
    api_key_env: str | None = None
    max_in_flight: int = 4
    retries: int = 2

    def __post_init__(self):
        if self.kind not in ("hash", "remote"):
            raise ConfigError(f"unknown embedding provider kind {self.kind!r}")
        if self.dim <= 0:
            raise ConfigError("embedding dim must be positive")
        if self.subword is not None:
            lo, hi = self.subword
            object.__setattr__(self, "subword", (int(lo), int(hi)))
            if not 1 <= lo <= hi:
                raise ConfigError(f"bad subword range {self.subword}")
        if self.kind == "remote":
            url = urlparse(self.endpoint or "")
            if url.scheme not in ("http", "https") or not url.netloc:
                raise ConfigError(f"remote endpoint is not a valid URL: {self.endpoint!r}")
            if not self.model:
                raise ConfigError("remote embedding provider needs a model name")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")

    def fingerprint(self) -> str:
        """Canonical string of everything that determines the vectors produced."""
        if self.kind == "hash":
            keys = {"kind": "hash", "dim": self.dim, "seed": self.seed,
                    "subword": list(self.subword) if self.subword else None}
        else:
            keys = {"kind": "remote", "dim": self.dim, "endpoint": self.endpoint, "model": self.model}
        return json.dumps(keys, sort_keys=True, separators=(",", ":"))

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["subword"] is not None:
            d["subword"] = list(d["subword"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingProviderSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown embedding provider field(s) {sorted(extra)}")
        d = dict(d)
        if d.get("subword") is not None:
            d["subword"] = tuple(d["subword"])
        return cls(**d)

    @classmethod
    def from_fingerprint(cls, fp: str) -> "EmbeddingProviderSpec":
        d = json.loads(fp)
        if d.get("subword") is not None:
            d["subword"] = tuple(d["subword"])
        return cls(**d)


@lru_cache(maxsize=1 << 18)
def _hash64(feature: str, seed: int) -> int:
    key = seed.to_bytes(8, "little", signed=False)
    return int.from_bytes(hashlib.blake2b(feature.encode("utf-8"), digest_size=8, key=key).digest(), "little")


def bucket_and_sign(feature: str, dim: int, seed: int) -> tuple[int, float]:
    """Hash bucket in ``[0, dim)`` and sign in ``{+1, -1}`` for one feature."""
    h = _hash64(feature, seed & 0xFFFFFFFFFFFFFFFF)
    return h % dim, (1.0 if (h >> 63) == 0 else -1.0)


def _features(token: str, subword: tuple[int, int] | None) -> list[str]:
    if subword is None:
        return [token]
    lo, hi = subword
    padded = f"<{token}>"
    feats = [token]
    for n in range(lo, hi + 1):
        feats.extend("#" + padded[i : i + n] for i in range(len(padded) - n + 1))
    return feats


def _zero_guard(vec: np.ndarray, what: str) -> np.ndarray:
    norm = float(np.sqrt(np.dot(vec, vec)))
    if norm == 0.0:
        logger.warning("zero embedding for %s; substituting unit basis vector e_0", what)
        out = np.zeros_like(vec)
        out[0] = 1.0
        return out
    return vec / norm


def hash_embed(
    tokens: TokenStream | Sequence[str], dim: int, seed: int = 0, subword: tuple[int, int] | None = None
) -> np.ndarray:
    """Signed feature-hashing of a bag of tokens, L2-normalized.

    An all-zero result (no tokens, or signs cancelling) becomes ``e_0``.
    """
    if dim <= 0:
        raise ConfigError("dim must be positive")
    vec = np.zeros(dim, dtype=np.float64)
    for tok in tokens:
        for feat in _features(tok, subword):
            b, s = bucket_and_sign(feat, dim, seed)
            vec[b] += s
    return _zero_guard(vec, f"tokens {list(tokens)[:5]!r}")


class Embedder(Protocol):
    spec: EmbeddingProviderSpec

    def embed(self, text: str) -> np.ndarray: ...

    def embed_many(self, texts: Sequence[str]) -> np.ndarray: ...

    def embed_tokens(self, text: str) -> np.ndarray: ...


class HashEmbedder:
    def __init__(self, spec: EmbeddingProviderSpec, tokenizer: TokenizerConfig = DEFAULT_TOKENIZER):
        if spec.kind != "hash":
            raise ConfigError("HashEmbedder needs a hash spec")
        self.spec = spec
        self.tokenizer = tokenizer

    def embed(self, text: str) -> np.ndarray:
        return hash_embed(tokenize(text, self.tokenizer), self.spec.dim, self.spec.seed, self.spec.subword)

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), self.spec.dim), dtype=np.float64)
        for i, t in enumerate(texts):
            out[i] = self.embed(t)
        return out

    def embed_tokens(self, text: str) -> np.ndarray:
        """One unit vector per token, for late-interaction scoring."""
        toks = tokenize(text, self.tokenizer).tokens
        out = np.empty((len(toks), self.spec.dim), dtype=np.float64)
        for i, t in enumerate(toks):
            out[i] = hash_embed((t,), self.spec.dim, self.spec.seed, self.spec.subword)
        return out


class RemoteEmbedder:
    """Client for a JSON embedding service, with bounded in-flight requests."""

    def __init__(self, spec: EmbeddingProviderSpec, client=None):
        import httpx

        if spec.kind != "remote":
            raise ConfigError("RemoteEmbedder needs a remote spec")
        self.spec = spec
        headers = {}
        if spec.api_key_env and os.environ.get(spec.api_key_env):
            headers["Authorization"] = f"Bearer {os.environ[spec.api_key_env]}"
        self._client = client or httpx.Client(timeout=spec.timeout, headers=headers)
        self._slots = threading.BoundedSemaphore(spec.max_in_flight)

    def _post(self, texts: list[str]) -> list[list[float]]:
        import httpx

        last: Exception | None = None
        for _ in range(self.spec.retries + 1):
            try:
                with self._slots:
                    resp = self._client.post(self.spec.endpoint, json={"model": self.spec.model, "input": texts})
                if resp.status_code >= 500 or resp.status_code == 429:
                    last = ProviderError(f"embedding service returned {resp.status_code}")
                    continue
                if resp.status_code >= 400:
                    raise ProviderError(f"embedding service returned {resp.status_code}", retryable=False)
                body = resp.json()
                embs = body["embeddings"]
                if not isinstance(embs, list) or len(embs) != len(texts):
                    raise ProviderError("embedding response has wrong length", retryable=False)
                return embs
            except (httpx.TimeoutException, httpx.TransportError) as exc:
                last = ProviderError(f"embedding request failed: {exc}")
            except (KeyError, ValueError, TypeError) as exc:
                raise ProviderError(f"malformed embedding response: {exc}", retryable=False) from exc
        assert last is not None
        raise last

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.spec.dim))
        raw = self._post(list(texts))
        out = np.empty((len(raw), self.spec.dim), dtype=np.float64)
        for i, row in enumerate(raw):
            if len(row) != self.spec.dim:
                raise ConfigError(f"remote returned dim {len(row)}, configured {self.spec.dim}")
            v = np.asarray(row, dtype=np.float64)
            if not np.all(np.isfinite(v)):
                raise ProviderError("non-finite embedding values", retryable=False)
            out[i] = _zero_guard(v, repr(texts[i][:40]))
        return out

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]

    def embed_tokens(self, text: str) -> np.ndarray:
        toks = list(tokenize(text).tokens)
        return self.embed_many(toks) if toks else np.zeros((0, self.spec.dim))


def make_embedder(spec: EmbeddingProviderSpec) -> Embedder:
    return HashEmbedder(spec) if spec.kind == "hash" else RemoteEmbedder(spec)


def embed(provider: EmbeddingProviderSpec | Embedder, text: str) -> np.ndarray:
    if isinstance(provider, EmbeddingProviderSpec):
        provider = make_embedder(provider)
    return provider.embed(text)


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine of a zero-norm vector is undefined")
    return float(np.dot(a, b)) / (na * nb)
