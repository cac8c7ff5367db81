from __future__ import annotations

import json
import math

import numpy as np
import pytest

from ragintent.embedding import EmbeddingProviderSpec, HashEmbedder
from ragintent.errors import CatalogError, EncoderMismatchError, IndexFormatError
from ragintent.retrieval import (
    BM25Params,
    CandidateSet,
    ClusteredDenseSearch,
    CorpusError,
    DenseIndex,
    ExemplarPair,
    Retriever,
    bm25_topk,
    build_dense_index,
    build_index,
    build_maxsim_index,
    build_sparse_index,
    dense_topk,
    load_index,
    maxsim_topk,
    read_exemplars,
    save_index,
    upsert,
    upsert_many,
    write_exemplars,
)
from ragintent.retrieval.dense import recall_at_k
from ragintent.retrieval.persist import index_bytes, index_from_bytes
from ragintent.taxonomy import IntentPath

EMB = HashEmbedder(EmbeddingProviderSpec(dim=256, seed=3))


def _p(i: int, q: str, *labels: str, vertical: str = "v") -> ExemplarPair:
    return ExemplarPair(i, q, IntentPath(vertical, labels or ("x",)))


def _oracle_topk(matrix: np.ndarray, q: np.ndarray, ids, k: int):
    scores = []
    for i in range(matrix.shape[0]):
        s = 0.0
        for j in range(matrix.shape[1]):
            s += float(matrix[i, j]) * float(q[j])
        scores.append(s)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], ids[i]))
    return [(ids[i], scores[i]) for i in order[:k]]


# dense


def test_dense_self_retrieval(small_corpus):
    pairs = small_corpus.index_pairs()
    idx = build_dense_index(pairs, EMB, small_corpus.catalog)
    for p in pairs[:40]:
        top = dense_topk(idx, EMB.embed(p.query), 1, fingerprint=EMB.spec.fingerprint())
        assert top.entries[0][1] == pytest.approx(1.0, abs=1e-6)
        # duplicate query text may tie; the lower id wins
        assert top.ids[0] <= p.id or top.entries[0][0].query == p.query


def test_dense_k_saturates(small_corpus):
    pairs = small_corpus.index_pairs()
    idx = build_dense_index(pairs, EMB)
    res = dense_topk(idx, EMB.embed("anything"), len(pairs) + 50)
    assert len(res) == len(pairs)
    assert res.scores == sorted(res.scores, reverse=True)


def test_dense_matches_bruteforce_oracle():
    rng = np.random.default_rng(5)
    n, d = 300, 24
    vecs = rng.standard_normal((n, d))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    pairs = [_p(i * 3 + 1, f"q {i}") for i in range(n)]
    idx = DenseIndex(pairs, vecs.astype(np.float32), "fp")
    ids = [p.id for p in pairs]
    for _ in range(20):
        q = rng.standard_normal(d)
        q = (q / np.linalg.norm(q)).astype(np.float32).astype(np.float64)
        for k in (1, 5, 10, 50):
            got = dense_topk(idx, q, k)
            want = _oracle_topk(idx.matrix, q, ids, k)
            assert got.ids == [i for i, _ in want]
            assert got.scores == [s for _, s in want]


def test_dense_tie_breaks_to_lower_id():
    v = np.ones((3, 4), dtype=np.float32) / 2
    idx = DenseIndex([_p(2, "b"), _p(5, "c"), _p(9, "a")], v, "fp")
    assert dense_topk(idx, np.ones(4), 2).ids == [2, 5]


def test_dense_fingerprint_and_dim_mismatch(small_corpus):
    idx = build_dense_index(small_corpus.index_pairs(), EMB)
    with pytest.raises(EncoderMismatchError):
        dense_topk(idx, EMB.embed("x"), 3, fingerprint="hash:dim=8")
    with pytest.raises(ValueError):
        dense_topk(idx, np.ones(17), 3)
    with pytest.raises(ValueError):
        dense_topk(idx, EMB.embed("x"), 0)


def test_dense_vertical_filter(small_corpus):
    idx = build_dense_index(small_corpus.index_pairs(), EMB)
    res = dense_topk(idx, EMB.embed("order"), 30, vertical="b")
    assert res and all(p.vertical_id == "b" for p, _ in res.entries)


def test_clustered_recall(bench_corpus):
    emb = HashEmbedder(EmbeddingProviderSpec())
    idx = build_dense_index(bench_corpus.index_pairs(), emb)
    ann = ClusteredDenseSearch(idx, seed=0)
    recalls = []
    for ex in bench_corpus.test_set()[::7][:150]:
        q = emb.embed(ex.query)
        exact = dense_topk(idx, q, 10)
        approx = ann.topk(q, 10)
        recalls.append(recall_at_k(exact, approx))
        exact_scores = dict(zip(exact.ids, exact.scores))
        for i, s in zip(approx.ids, approx.scores):
            if i in exact_scores:
                assert s == exact_scores[i]
    assert sum(recalls) / len(recalls) >= 0.95


# sparse


def _bm25_oracle(docs: list[list[str]], query: list[str], k1=1.5, b=0.75) -> list[float]:
    n = len(docs)
    avgdl = sum(len(d) for d in docs) / n
    out = []
    for d in docs:
        s = 0.0
        for t in query:
            df = sum(1 for x in docs if t in x)
            if df == 0 or t not in d:
                continue
            idf = math.log((n - df + 0.5) / (df + 0.5) + 1)
            tf = d.count(t)
            s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(d) / avgdl))
        out.append(s)
    return out


@pytest.mark.parametrize("docs,query", [
    (["track my order", "order a pizza now", "cancel order order"], ["order", "track"]),
    (["reset password", "reset my device now please", "device battery", "battery dies fast", "track parcel"],
     ["reset", "device", "battery"]),
])
def test_bm25_hand_oracle(docs, query):
    pairs = [_p(i, d) for i, d in enumerate(docs)]
    idx = build_sparse_index(pairs)
    want = _bm25_oracle([d.split() for d in docs], query)
    res = bm25_topk(idx, query, len(docs))
    got = dict(zip(res.ids, res.scores))
    for i, w in enumerate(want):
        if w > 0:
            assert got[i] == pytest.approx(w, abs=1e-9)
        else:
            assert i not in got


def test_bm25_no_shared_terms_is_empty():
    idx = build_sparse_index([_p(1, "alpha beta"), _p(2, "gamma")])
    assert not bm25_topk(idx, "zeta", 5)
    assert not bm25_topk(idx, [], 5)


def test_bm25_more_matches_score_higher():
    idx = build_sparse_index([_p(1, "red shoe box"), _p(2, "red shoe"), _p(3, "red"), _p(4, "blue")])
    res = bm25_topk(idx, "red shoe box", 4)
    assert res.ids == [1, 2, 3]


def test_bm25_params_change_scores():
    idx = build_sparse_index([_p(1, "a a a b"), _p(2, "a c")])
    s1 = bm25_topk(idx, "a", 2).scores
    s2 = bm25_topk(idx, "a", 2, BM25Params(k1=0.5, b=0.0)).scores
    assert s1 != s2


def test_sparse_postings_sorted():
    idx = build_sparse_index([_p(7, "x y"), _p(3, "x"), _p(5, "y x x")])
    assert idx.postings("x") == [(3, 1), (5, 2), (7, 1)]
    assert idx.postings("nope") == []


# maxsim


def test_maxsim_degenerate_cases():
    idx = build_maxsim_index([_p(1, "one two"), _p(2, "three")], EMB)
    assert not maxsim_topk(idx, np.zeros((0, EMB.spec.dim)), 3)
    empty = build_maxsim_index([], EMB)
    assert not maxsim_topk(empty, EMB.embed_tokens("x"), 3)
    with pytest.raises(ValueError):
        maxsim_topk(idx, np.ones((2, 5)), 3)


def test_maxsim_exact_match_scores_token_count():
    idx = build_maxsim_index([_p(1, "where is my parcel"), _p(2, "battery low")], EMB)
    res = maxsim_topk(idx, EMB.embed_tokens("where is my parcel"), 2)
    assert res.ids[0] == 1
    assert res.scores[0] == pytest.approx(4.0, abs=1e-5)


# upsert


@pytest.mark.parametrize("kind", ["dense", "bm25", "maxsim"])
def test_upsert_new_and_overwrite(small_corpus, kind):
    pairs = small_corpus.index_pairs()
    emb = None if kind == "bm25" else EMB
    r = Retriever(build_index(kind, pairs, emb), emb)
    intent = pairs[0].intent
    new = ExemplarPair(10_000, "zorblax quintessence", intent)
    r2 = r.upsert(new)
    assert len(r2) == len(r) + 1 and len(r) == len(pairs)
    assert r2.search(new.query, 1).ids == [10_000]
    moved = ExemplarPair(10_000, "flumbert gravitas", pairs[-1].intent)
    r3 = r2.upsert(moved)
    assert len(r3) == len(r2)
    top = r3.search("flumbert gravitas", 1)
    assert top.ids == [10_000] and top.top_intent() == pairs[-1].intent


@pytest.mark.parametrize("kind", ["dense", "bm25", "maxsim"])
def test_sequential_upserts_equal_batch_build(small_corpus, kind):
    pairs = list(small_corpus.index_pairs())
    base, extra = pairs[:-100], pairs[-100:]
    emb = None if kind == "bm25" else EMB
    idx = build_index(kind, base, emb)
    for p in extra:
        idx = upsert(idx, p, emb)
    bulk = upsert_many(build_index(kind, base, emb), extra, emb)
    full = build_index(kind, pairs, emb)
    for other in (idx, bulk):
        assert index_bytes(other) == index_bytes(full)


def test_upsert_rejects_unknown_intent(small_corpus):
    idx = build_dense_index(small_corpus.index_pairs(), EMB, small_corpus.catalog)
    with pytest.raises(CatalogError):
        upsert(idx, _p(99_999, "x", "nope", vertical="a"), EMB)


# persistence


@pytest.mark.parametrize("kind", ["dense", "bm25", "maxsim"])
def test_persist_round_trip(small_corpus, tmp_path, kind):
    emb = None if kind == "bm25" else EMB
    idx = build_index(kind, small_corpus.index_pairs(), emb, small_corpus.catalog)
    path = tmp_path / "i.idx"
    save_index(idx, path)
    back = load_index(path)
    assert back.kind == idx.kind and back.pairs == idx.pairs
    assert index_bytes(back) == index_bytes(idx)
    r1, r2 = Retriever(idx, emb), Retriever(back, emb)
    for ex in small_corpus.test_set()[:10]:
        a, b = r1.search(ex.query, 5), r2.search(ex.query, 5)
        assert a.ids == b.ids and a.scores == b.scores


def test_persist_rejects_corruption(small_corpus):
    data = index_bytes(build_dense_index(small_corpus.index_pairs(), EMB))
    with pytest.raises(IndexFormatError, match="magic"):
        index_from_bytes(b"XXXXXXXX" + data[8:])
    flipped = bytearray(data)
    flipped[len(data) // 2] ^= 0xFF
    with pytest.raises(IndexFormatError, match="checksum"):
        index_from_bytes(bytes(flipped))
    with pytest.raises(IndexFormatError):
        index_from_bytes(data[:20])


def test_persist_empty_index():
    idx = build_dense_index([], EMB)
    back = index_from_bytes(index_bytes(idx))
    assert len(back) == 0 and back.dim == EMB.spec.dim


# ingest


def test_exemplar_file_round_trip(small_corpus, tmp_path):
    path = tmp_path / "ex.jsonl"
    pairs = small_corpus.index_pairs()
    write_exemplars(path, pairs)
    assert read_exemplars(path, small_corpus.catalog) == list(pairs)


def test_exemplar_file_reports_bad_lines(small_corpus, tmp_path):
    good = small_corpus.index_pairs()[0].to_record()
    lines = [good, {**good, "id": "seven"}, {**good, "id": 2, "intent": "no > such"},
             {k: v for k, v in good.items() if k != "query"}, {**good, "id": 3, "color": 1}]
    path = tmp_path / "bad.jsonl"
    path.write_text("\n".join(json.dumps(x) for x in lines) + "\nnot json\n", encoding="utf-8")
    with pytest.raises(CorpusError) as info:
        read_exemplars(path, small_corpus.catalog)
    assert [e.line for e in info.value.errors] == [2, 3, 4, 5, 6]


def test_candidate_set_dedups_intents():
    a, b = IntentPath("v", ("x",)), IntentPath("v", ("y",))
    cs = CandidateSet(((ExemplarPair(1, "q", a), 0.9), (ExemplarPair(2, "r", b), 0.8),
                       (ExemplarPair(3, "s", a), 0.7)), 3)
    assert cs.unique_intents == (a, b)
    assert cs.truncate(1).unique_intents == (a,)
    assert cs.filter_min_score(0.75).ids == [1, 2]
