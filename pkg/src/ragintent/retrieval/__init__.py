"""Exemplar indexes and the retriever facade used by the pipeline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..embedding import Embedder, EmbeddingProviderSpec, make_embedder
from ..taxonomy import IntentCatalog
from .dense import (ClusteredDenseSearch, DenseIndex, build_dense_index, dense_topk, prepare_query,
                    upsert_dense, upsert_many_dense)
from .ingest import CorpusError, read_exemplars, write_exemplars
from .maxsim import MaxSimIndex, build_maxsim_index, maxsim_topk, upsert_many_maxsim, upsert_maxsim
from .persist import load_index, save_index
from .sparse import (BM25Params, SparseIndex, bm25_idf, bm25_topk, build_sparse_index,
                     upsert_many_sparse, upsert_sparse)
from .types import CandidateSet, ExemplarPair

RETRIEVER_KINDS = ("dense", "bm25", "maxsim")

__all__ = [
    "BM25Params", "CandidateSet", "ClusteredDenseSearch", "CorpusError", "DenseIndex", "ExemplarPair",
    "MaxSimIndex", "Retriever", "SparseIndex", "bm25_idf", "bm25_topk", "build_dense_index",
    "build_index", "build_maxsim_index", "build_sparse_index", "dense_topk", "load_index",
    "maxsim_topk", "prepare_query", "read_exemplars", "save_index", "upsert", "upsert_many", "write_exemplars",
]


def build_index(kind: str, pairs: Sequence[ExemplarPair], embedder: Embedder | None = None,
                catalog: IntentCatalog | None = None, params: BM25Params = BM25Params()):
    if kind == "dense":
        return build_dense_index(pairs, embedder, catalog)
    if kind == "maxsim":
        return build_maxsim_index(pairs, embedder, catalog)
    if kind in ("bm25", "sparse"):
        return build_sparse_index(pairs, catalog, params=params)
    raise ValueError(f"unknown retriever kind {kind!r}")


def upsert(index, pair: ExemplarPair, embedder: Embedder | None = None):
    """Return a new index containing ``pair``; ``index`` itself is unchanged."""
    if isinstance(index, DenseIndex):
        return upsert_dense(index, pair, embedder)
    if isinstance(index, MaxSimIndex):
        return upsert_maxsim(index, pair, embedder)
    return upsert_sparse(index, pair)


def upsert_many(index, pairs: Sequence[ExemplarPair], embedder: Embedder | None = None):
    """Same result as upserting ``pairs`` one at a time, without the per-pair copy."""
    pairs = list(pairs)
    if isinstance(index, DenseIndex):
        return upsert_many_dense(index, pairs, embedder)
    if isinstance(index, MaxSimIndex):
        return upsert_many_maxsim(index, pairs, embedder)
    return upsert_many_sparse(index, pairs)


def embedder_for(index) -> Embedder | None:
    """Rebuild the hash encoder recorded in an index fingerprint."""
    fp = getattr(index, "fingerprint", None)
    if fp is None:
        return None
    return make_embedder(EmbeddingProviderSpec.from_fingerprint(fp))


@dataclass(frozen=True)
class Retriever:
    """An immutable (index, encoder) snapshot answering top-k queries."""

    index: object
    embedder: Embedder | None = None

    @property
    def kind(self) -> str:
        return {"dense": "dense", "sparse": "bm25", "maxsim": "maxsim"}[self.index.kind]

    def __len__(self) -> int:
        return len(self.index)

    def search(self, query: str, k: int, vertical: str | None = None) -> CandidateSet:
        idx = self.index
        if isinstance(idx, SparseIndex):
            return bm25_topk(idx, query, k, vertical=vertical)
        fp = self.embedder.spec.fingerprint()
        if isinstance(idx, DenseIndex):
            return dense_topk(idx, self.embedder.embed(query), k, vertical=vertical, fingerprint=fp)
        return maxsim_topk(idx, self.embedder.embed_tokens(query), k, vertical=vertical, fingerprint=fp)

    def upsert(self, pair: ExemplarPair, catalog: IntentCatalog | None = None) -> "Retriever":
        """New retriever containing ``pair``; ``catalog`` replaces the index catalog when given."""
        index = self.index if catalog is None else self.index.with_catalog(catalog)
        return Retriever(upsert(index, pair, self.embedder), self.embedder)

    def upsert_many(self, pairs: Sequence[ExemplarPair], catalog: IntentCatalog | None = None) -> "Retriever":
        index = self.index if catalog is None else self.index.with_catalog(catalog)
        return Retriever(upsert_many(index, pairs, self.embedder), self.embedder)
