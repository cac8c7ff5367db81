"""Pure numpy versions of the compiled kernels.

Every floating point expression mirrors ``_ckernels.pyx`` operation for
operation (sequential accumulation over the vector dimension, term-by-term
BM25 accumulation) so results are bit-identical across backends.
"""

from __future__ import annotations

import numpy as np


def dense_scores(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    n, d = matrix.shape
    if query.shape[0] != d:
        raise ValueError("query dimension mismatch")
    acc = np.zeros(n, dtype=np.float64)
    for j in np.flatnonzero(query):
        acc = acc + matrix[:, j].astype(np.float64) * query[j]
    return acc


def topk(scores: np.ndarray, ids: np.ndarray, k: int, mask: np.ndarray | None = None) -> np.ndarray:
    if k <= 0 or scores.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    rows = np.arange(scores.shape[0], dtype=np.int64)
    if mask is not None:
        rows = rows[mask.astype(bool)]
    # lexsort: last key is primary.
    order = np.lexsort((ids[rows], -scores[rows]))
    return rows[order[:k]]


def bm25_scores(indptr, doc_idx, tf, doc_len, avgdl, term_ids, idf, k1, b, n_docs):
    scores = np.zeros(n_docs, dtype=np.float64)
    touched = np.zeros(n_docs, dtype=np.uint8)
    for term in term_ids:
        if term < 0:
            continue
        w = idf[term]
        lo, hi = indptr[term], indptr[term + 1]
        docs = doc_idx[lo:hi]
        f = tf[lo:hi]
        dl = doc_len[docs]
        norm = k1 * (1.0 - b + b * dl / avgdl)
        scores[docs] = scores[docs] + w * (f * (k1 + 1.0)) / (f + norm)
        touched[docs] = 1
    return scores, touched


def maxsim_scores(query: np.ndarray, tokens: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    m, d = query.shape
    if tokens.shape[1] != d:
        raise ValueError("token vector dimension mismatch")
    n_docs = offsets.shape[0] - 1
    scores = np.zeros(n_docs, dtype=np.float64)
    if m == 0 or tokens.shape[0] == 0:
        return scores
    nonempty = offsets[1:] > offsets[:-1]
    starts = offsets[:-1][nonempty]
    total = np.zeros(int(nonempty.sum()), dtype=np.float64)
    for a in range(m):
        sims = np.zeros(tokens.shape[0], dtype=np.float64)
        for j in np.flatnonzero(query[a]):
            sims = sims + query[a, j] * tokens[:, j].astype(np.float64)
        total = total + np.maximum.reduceat(sims, starts)
    scores[nonempty] = total
    return scores
