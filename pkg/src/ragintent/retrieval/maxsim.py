"""Late-interaction retrieval: per-token vectors scored with MaxSim."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import kernels
from ..embedding import Embedder
from ..errors import EncoderMismatchError
from ..taxonomy import IntentCatalog
from .types import CandidateSet, ExemplarPair, PairTable, sort_pairs, validate_pairs


class MaxSimIndex(PairTable):
    kind = "maxsim"

    def __init__(self, pairs, tokens: np.ndarray, offsets: np.ndarray, fingerprint: str,
                 catalog: IntentCatalog | None = None):
        super().__init__(pairs, catalog)
        self.tokens = np.asfortranarray(tokens, dtype=np.float32)
        self.offsets = np.ascontiguousarray(offsets, dtype=np.int64)
        if self.offsets.shape[0] != len(self.pairs) + 1:
            raise ValueError("offsets must have one more entry than pairs")
        self.tokens.flags.writeable = False
        self.fingerprint = fingerprint

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]

    def doc_tokens(self, row: int) -> np.ndarray:
        return self.tokens[self.offsets[row] : self.offsets[row + 1]]


def _token_block(embedder: Embedder, query: str, dim: int) -> np.ndarray:
    vecs = embedder.embed_tokens(query)
    return vecs.astype(np.float32) if len(vecs) else np.zeros((0, dim), dtype=np.float32)


def build_maxsim_index(pairs: Sequence[ExemplarPair], embedder: Embedder,
                       catalog: IntentCatalog | None = None) -> MaxSimIndex:
    ordered = sort_pairs(pairs)
    validate_pairs(ordered, catalog)
    dim = embedder.spec.dim
    blocks = [_token_block(embedder, p.query, dim) for p in ordered]
    offsets = np.zeros(len(blocks) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(b) for b in blocks])
    tokens = np.concatenate(blocks) if blocks else np.zeros((0, dim), dtype=np.float32)
    return MaxSimIndex(ordered, tokens.reshape(-1, dim), offsets, embedder.spec.fingerprint(), catalog)


def maxsim_topk(index: MaxSimIndex, query_token_vecs: np.ndarray, k: int, *,
                vertical: str | None = None, fingerprint: str | None = None) -> CandidateSet:
    """Score = sum over query tokens of the max cosine to any document token."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if fingerprint is not None and fingerprint != index.fingerprint:
        raise EncoderMismatchError("query encoder differs from the index encoder")
    q = np.asarray(query_token_vecs, dtype=np.float64)
    if q.size == 0 or len(index) == 0:
        return CandidateSet((), k)
    if q.ndim != 2 or q.shape[1] != index.dim:
        raise ValueError(f"query token dim {q.shape} does not match index dim {index.dim}")
    norms = np.linalg.norm(q, axis=1)
    norms[norms == 0] = 1.0
    q = np.ascontiguousarray((q / norms[:, None]).astype(np.float32).astype(np.float64))
    scores = kernels.maxsim_scores(q, index.tokens, index.offsets)
    mask = (index.offsets[1:] > index.offsets[:-1]).astype(np.uint8)
    vm = index.vertical_mask(vertical)
    if vm is not None:
        mask &= vm
    rows = kernels.topk(scores, index.ids, k, mask)
    return index._candidates(rows, scores, k)


def upsert_maxsim(index: MaxSimIndex, pair: ExemplarPair, embedder: Embedder) -> MaxSimIndex:
    validate_pairs([pair], index.catalog)
    if embedder.spec.fingerprint() != index.fingerprint:
        raise EncoderMismatchError("upsert encoder differs from the index encoder")
    block = _token_block(embedder, pair.query, index.dim)
    pairs, row, replaced = index._splice(pair)
    lo = index.offsets[row]
    hi = index.offsets[row + 1] if replaced else lo
    tokens = np.concatenate([index.tokens[:lo], block, index.tokens[hi:]])
    lengths = np.diff(index.offsets).tolist()
    if replaced:
        lengths[row] = len(block)
    else:
        lengths.insert(row, len(block))
    offsets = np.zeros(len(lengths) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum(lengths)
    return MaxSimIndex(pairs, tokens, offsets, index.fingerprint, index.catalog)


def upsert_many_maxsim(index: MaxSimIndex, pairs: Sequence[ExemplarPair], embedder: Embedder) -> MaxSimIndex:
    validate_pairs(pairs, index.catalog)
    if embedder.spec.fingerprint() != index.fingerprint:
        raise EncoderMismatchError("upsert encoder differs from the index encoder")
    if not pairs:
        return index
    new_blocks = [_token_block(embedder, p.query, index.dim) for p in pairs]
    merged, sources = index._merge(pairs)
    blocks = [new_blocks[j] if is_new else index.doc_tokens(j) for is_new, j in sources]
    offsets = np.zeros(len(blocks) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(b) for b in blocks])
    return MaxSimIndex(merged, np.concatenate(blocks).reshape(-1, index.dim), offsets,
                       index.fingerprint, index.catalog)
