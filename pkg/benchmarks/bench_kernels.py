"""Time the compiled and numpy kernel backends on identical inputs.

    python benchmarks/bench_kernels.py [--dim 2048] [--repeat 20]

Prints one line per (kernel, backend) with the median wall time and checks
that both backends return bit-identical results.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from ragintent.embedding import EmbeddingProviderSpec, HashEmbedder
from ragintent.evaluation.corpus import CorpusSpec, generate_synthetic_corpus
from ragintent.kernels import backends
from ragintent.retrieval import build_dense_index, build_maxsim_index, build_sparse_index
from ragintent.retrieval.dense import prepare_query
from ragintent.textproc import tokenize


def _median_ms(fn, repeat: int) -> float:
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dim", type=int, default=2048)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    corpus = generate_synthetic_corpus(CorpusSpec(seed=args.seed))
    pairs = corpus.index_pairs()
    emb = HashEmbedder(EmbeddingProviderSpec(dim=args.dim, seed=args.seed))
    dense = build_dense_index(pairs, emb)
    sparse = build_sparse_index(pairs)
    small = corpus.index_pairs("3p")
    maxsim = build_maxsim_index(small, emb)
    query = corpus.test_set()[0].query
    qvec = prepare_query(dense, emb.embed(query), None)
    qtoks = emb.embed_tokens(query).astype(np.float32).astype(np.float64)
    term_ids = np.array([sparse.vocab[t] for t in tokenize(query).tokens if t in sparse.vocab], dtype=np.int64)
    scores = np.asarray(backends()["python"].dense_scores(dense.matrix, qvec))

    print(f"pairs={len(pairs)} dim={args.dim} maxsim_pairs={len(small)} tokens={len(maxsim.tokens)}")
    results = {}
    for name, mod in backends().items():
        cases = {
            "dense_scores": lambda m=mod: m.dense_scores(dense.matrix, qvec),
            "topk(k=10)": lambda m=mod: m.topk(scores, dense.ids, 10),
            "bm25_scores": lambda m=mod: m.bm25_scores(
                sparse.indptr, sparse.doc_idx, sparse.tf, sparse.doc_len, sparse.avgdl, term_ids, sparse.idf,
                sparse.params.k1, sparse.params.b, len(sparse)),
            "maxsim_scores": lambda m=mod: m.maxsim_scores(np.ascontiguousarray(qtoks), maxsim.tokens,
                                                           maxsim.offsets),
        }
        for kernel, fn in cases.items():
            results[(kernel, name)] = (_median_ms(fn, args.repeat), fn())

    for kernel in ("dense_scores", "topk(k=10)", "bm25_scores", "maxsim_scores"):
        row = {b: results[(kernel, b)] for b in backends()}
        line = "  ".join(f"{b}={t:8.3f} ms" for b, (t, _) in row.items())
        if len(row) == 2:
            (_, a), (_, b) = row["python"], row["cython"]
            same = all(np.array_equal(np.asarray(x), np.asarray(y)) for x, y in
                       zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)))
            speedup = row["python"][0] / row["cython"][0]
            line += f"  speedup={speedup:5.1f}x  identical={same}"
        print(f"{kernel:>14}: {line}")


if __name__ == "__main__":
    main()
