"""Okapi BM25 over an inverted index with CSR postings."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import kernels
from ..taxonomy import IntentCatalog
from ..textproc import DEFAULT_TOKENIZER, TokenizerConfig, tokenize
from .types import CandidateSet, ExemplarPair, PairTable, sort_pairs, validate_pairs


@dataclass(frozen=True)
class BM25Params:
    k1: float = 1.5
    b: float = 0.75


def bm25_idf(n_docs: int, df: int) -> float:
    return math.log((n_docs - df + 0.5) / (df + 0.5) + 1.0)


class SparseIndex(PairTable):
    kind = "sparse"

    def __init__(self, pairs, catalog: IntentCatalog | None = None,
                 tokenizer: TokenizerConfig = DEFAULT_TOKENIZER, params: BM25Params = BM25Params(),
                 doc_terms: Sequence[Counter] | None = None):
        super().__init__(pairs, catalog)
        self.tokenizer = tokenizer
        self.params = params
        if doc_terms is None:
            doc_terms = [Counter(tokenize(p.query, tokenizer).tokens) for p in self.pairs]
        self.doc_terms = tuple(doc_terms)
        self._build_postings()

    def _build_postings(self) -> None:
        n = len(self.pairs)
        self.doc_len = np.fromiter((sum(c.values()) for c in self.doc_terms), dtype=np.float64, count=n)
        self.avgdl = float(self.doc_len.sum() / n) if n else 0.0
        postings: dict[str, list[tuple[int, int]]] = {}
        # Rows are in id order, so each posting list comes out sorted by doc id.
        for row, counts in enumerate(self.doc_terms):
            for term, tf in counts.items():
                postings.setdefault(term, []).append((row, tf))
        self.vocab = {t: i for i, t in enumerate(sorted(postings))}
        indptr = np.zeros(len(self.vocab) + 1, dtype=np.int64)
        doc_idx, tfs = [], []
        for term, i in self.vocab.items():
            plist = postings[term]
            indptr[i + 1] = indptr[i] + len(plist)
            doc_idx.extend(r for r, _ in plist)
            tfs.extend(f for _, f in plist)
        self.indptr = indptr
        self.doc_idx = np.asarray(doc_idx, dtype=np.int64)
        self.tf = np.asarray(tfs, dtype=np.float64)
        self.df = np.diff(indptr)
        self.idf = np.array([bm25_idf(n, int(d)) for d in self.df], dtype=np.float64)

    def postings(self, term: str) -> list[tuple[int, int]]:
        """``(pair id, term frequency)`` list for ``term``, sorted by id."""
        i = self.vocab.get(term)
        if i is None:
            return []
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return [(int(self.ids[r]), int(f)) for r, f in zip(self.doc_idx[lo:hi], self.tf[lo:hi])]


def build_sparse_index(pairs: Sequence[ExemplarPair], catalog: IntentCatalog | None = None,
                       tokenizer: TokenizerConfig = DEFAULT_TOKENIZER,
                       params: BM25Params = BM25Params()) -> SparseIndex:
    ordered = sort_pairs(pairs)
    validate_pairs(ordered, catalog)
    return SparseIndex(ordered, catalog, tokenizer, params)


def bm25_topk(index: SparseIndex, query_tokens, k: int, params: BM25Params | None = None,
              *, vertical: str | None = None) -> CandidateSet:
    """Rank documents sharing at least one query token by Okapi BM25.

    Repeated query tokens contribute once per occurrence.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if isinstance(query_tokens, str):
        query_tokens = tokenize(query_tokens, index.tokenizer).tokens
    params = params or index.params
    term_ids = np.fromiter((index.vocab.get(t, -1) for t in query_tokens), dtype=np.int64)
    if len(index) == 0 or not np.any(term_ids >= 0):
        return CandidateSet((), k)
    scores, touched = kernels.bm25_scores(
        index.indptr, index.doc_idx, index.tf, index.doc_len, index.avgdl,
        term_ids, index.idf, float(params.k1), float(params.b), len(index),
    )
    vm = index.vertical_mask(vertical)
    mask = touched if vm is None else (touched & vm)
    rows = kernels.topk(scores, index.ids, k, mask)
    return index._candidates(rows, scores, k)


def upsert_sparse(index: SparseIndex, pair: ExemplarPair) -> SparseIndex:
    """Copy-on-write upsert; document frequencies and avgdl are recomputed."""
    validate_pairs([pair], index.catalog)
    pairs, row, replaced = index._splice(pair)
    counts = Counter(tokenize(pair.query, index.tokenizer).tokens)
    terms = list(index.doc_terms)
    if replaced:
        terms[row] = counts
    else:
        terms.insert(row, counts)
    return SparseIndex(pairs, index.catalog, index.tokenizer, index.params, terms)


def upsert_many_sparse(index: SparseIndex, pairs: Sequence[ExemplarPair]) -> SparseIndex:
    validate_pairs(pairs, index.catalog)
    if not pairs:
        return index
    merged, sources = index._merge(pairs)
    terms = [Counter(tokenize(pairs[j].query, index.tokenizer).tokens) if is_new else index.doc_terms[j]
             for is_new, j in sources]
    return SparseIndex(merged, index.catalog, index.tokenizer, index.params, terms)
