"""Dense cosine index: exact scan plus an opt-in clustered (IVF-style) scan."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import kernels
from ..embedding import Embedder
from ..errors import EncoderMismatchError
from ..taxonomy import IntentCatalog
from .types import CandidateSet, ExemplarPair, PairTable, sort_pairs, validate_pairs


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", vectors, vectors))
    norms[norms == 0.0] = 1.0
    return (vectors / norms[:, None]).astype(np.float32)


class DenseIndex(PairTable):
    """Rows are float32 unit vectors ordered by pair id."""

    kind = "dense"

    def __init__(self, pairs, matrix: np.ndarray, fingerprint: str, catalog: IntentCatalog | None = None):
        super().__init__(pairs, catalog)
        # Column-major: the scan kernel sweeps one dimension at a time.
        matrix = np.asfortranarray(matrix, dtype=np.float32)
        if matrix.ndim != 2 or matrix.shape[0] != len(self.pairs):
            raise ValueError("matrix rows must match pair count")
        matrix.flags.writeable = False
        self.matrix = matrix
        self.fingerprint = fingerprint

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def build_dense_index(
    pairs: Sequence[ExemplarPair], embedder: Embedder, catalog: IntentCatalog | None = None
) -> DenseIndex:
    ordered = sort_pairs(pairs)
    validate_pairs(ordered, catalog)
    dim = embedder.spec.dim
    if ordered:
        vecs = embedder.embed_many([p.query for p in ordered])
    else:
        vecs = np.zeros((0, dim))
    return DenseIndex(ordered, _unit_rows(vecs), embedder.spec.fingerprint(), catalog)


def prepare_query(index: DenseIndex, query_vec: np.ndarray, fingerprint: str | None) -> np.ndarray:
    if fingerprint is not None and fingerprint != index.fingerprint:
        raise EncoderMismatchError(f"index built with {index.fingerprint}, query encoded with {fingerprint}")
    q = np.asarray(query_vec, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != index.dim:
        raise ValueError(f"query dim {q.shape} does not match index dim {index.dim}")
    n = float(np.sqrt(np.dot(q, q)))
    # Same rounding as stored rows so self-retrieval scores match.
    q = (q / n if n else q).astype(np.float32).astype(np.float64)
    return np.ascontiguousarray(q)


def dense_topk(
    index: DenseIndex,
    query_vec: np.ndarray,
    k: int,
    *,
    vertical: str | None = None,
    fingerprint: str | None = None,
) -> CandidateSet:
    """Exact top-k by cosine; ties go to the lower pair id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    q = prepare_query(index, query_vec, fingerprint)
    if len(index) == 0:
        return CandidateSet((), k)
    scores = kernels.dense_scores(index.matrix, q)
    rows = kernels.topk(scores, index.ids, k, index.vertical_mask(vertical))
    return index._candidates(rows, scores, k)


def upsert_dense(index: DenseIndex, pair: ExemplarPair, embedder: Embedder) -> DenseIndex:
    """Copy-on-write insert or overwrite; the original index is untouched."""
    validate_pairs([pair], index.catalog)
    if embedder.spec.fingerprint() != index.fingerprint:
        raise EncoderMismatchError("upsert encoder differs from the index encoder")
    row_vec = _unit_rows(embedder.embed(pair.query)[None, :])
    pairs, row, replaced = index._splice(pair)
    if replaced:
        matrix = index.matrix.copy()
        matrix[row] = row_vec[0]
    else:
        matrix = np.insert(index.matrix, row, row_vec[0], axis=0)
    return DenseIndex(pairs, matrix, index.fingerprint, index.catalog)


def upsert_many_dense(index: DenseIndex, pairs: Sequence[ExemplarPair], embedder: Embedder) -> DenseIndex:
    """Bulk form of :func:`upsert_dense` with the same resulting rows."""
    validate_pairs(pairs, index.catalog)
    if embedder.spec.fingerprint() != index.fingerprint:
        raise EncoderMismatchError("upsert encoder differs from the index encoder")
    if not pairs:
        return index
    new_rows = _unit_rows(embedder.embed_many([p.query for p in pairs]))
    merged, sources = index._merge(pairs)
    matrix = np.empty((len(merged), index.dim), dtype=np.float32, order="F")
    old = [(i, r) for i, (is_new, r) in enumerate(sources) if not is_new]
    new = [(i, j) for i, (is_new, j) in enumerate(sources) if is_new]
    if old:
        matrix[[i for i, _ in old]] = index.matrix[[r for _, r in old]]
    matrix[[i for i, _ in new]] = new_rows[[j for _, j in new]]
    return DenseIndex(merged, matrix, index.fingerprint, index.catalog)


class ClusteredDenseSearch:
    """Approximate search: k-means partitions, scan only the ``nprobe`` nearest.

    Within the probed partitions scoring is exact, so results are a subset
    of the exact scan with identical scores.
    """

    def __init__(self, index: DenseIndex, n_lists: int | None = None, nprobe: int | None = None,
                 seed: int = 0, iterations: int = 20):
        self.index = index
        n = len(index)
        self.n_lists = max(1, min(n, n_lists or int(round(np.sqrt(max(n, 1))))))
        self.nprobe = max(1, min(self.n_lists, nprobe or -(-self.n_lists // 3)))
        self.centroids, self.assign = self._kmeans(index.matrix.astype(np.float64), seed, iterations)

    def _kmeans(self, x: np.ndarray, seed: int, iterations: int):
        n = x.shape[0]
        if n == 0:
            return np.zeros((0, self.index.dim)), np.zeros(0, dtype=np.int64)
        rng = np.random.default_rng(seed)
        centroids = x[rng.choice(n, size=self.n_lists, replace=False)].copy()
        assign = np.zeros(n, dtype=np.int64)
        for _ in range(iterations):
            assign = np.argmax(x @ centroids.T, axis=1)
            for c in range(self.n_lists):
                members = x[assign == c]
                if len(members):
                    m = members.mean(axis=0)
                    nm = np.linalg.norm(m)
                    centroids[c] = m / nm if nm else centroids[c]
        return centroids, assign

    def topk(self, query_vec: np.ndarray, k: int, *, vertical: str | None = None,
             fingerprint: str | None = None) -> CandidateSet:
        idx = self.index
        q = prepare_query(idx, query_vec, fingerprint)
        if len(idx) == 0:
            return CandidateSet((), k)
        probe = np.argsort(-(self.centroids @ q), kind="stable")[: self.nprobe]
        rows = np.flatnonzero(np.isin(self.assign, probe))
        vm = idx.vertical_mask(vertical)
        if vm is not None:
            rows = rows[vm[rows].astype(bool)]
        sub = np.asfortranarray(idx.matrix[rows])
        sub_scores = kernels.dense_scores(sub, q)
        picked = kernels.topk(sub_scores, np.ascontiguousarray(idx.ids[rows]), k)
        return CandidateSet(tuple((idx.pairs[rows[i]], float(sub_scores[i])) for i in picked), k)


def recall_at_k(exact: CandidateSet, approx: CandidateSet) -> float:
    want = set(exact.ids)
    return len(want & set(approx.ids)) / len(want) if want else 1.0
